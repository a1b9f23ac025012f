//! Sparse undirected weighted graph with the degree statistics and the
//! normalized propagation operator used by the GCN and the importance scores.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Symmetric sparse matrix in row-list form. Rows are kept sorted by column
/// and never hold explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        SparseMatrix {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Accumulate `w` onto entry (i, j). Keeps the row sorted.
    pub fn add(&mut self, i: usize, j: usize, w: f64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => row[pos].1 += w,
            Err(pos) => row.insert(pos, (j, w)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn grand_sum(&self) -> f64 {
        (0..self.n).map(|i| self.row_sum(i)).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    /// Self * dense (n x d) -> (n x d).
    pub fn mul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "dimension mismatch in sparse matmul");
        let d = x.ncols();
        let mut out = Array2::zeros((self.n, d));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                for k in 0..d {
                    out[[i, k]] += w * x[[j, k]];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (i, j, w) in self.entries() {
            out[[i, j]] = w;
        }
        out
    }
}

/// Undirected weighted graph with node features and optional labels.
/// Self-loops are stored as a single diagonal entry.
#[derive(Debug, Clone)]
pub struct SparseGraph {
    adjacency: SparseMatrix,
    features: Array2<f64>,
    labels: Vec<Option<usize>>,
}

impl SparseGraph {
    pub fn new(features: Array2<f64>, labels: Vec<Option<usize>>) -> Self {
        let n = features.nrows();
        assert_eq!(labels.len(), n, "label count must equal node count");
        SparseGraph {
            adjacency: SparseMatrix::zeros(n),
            features,
            labels,
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    /// Accumulate an undirected edge of weight `w`. A self-loop (u == v)
    /// contributes a single diagonal entry of weight `w`.
    pub fn add_edge(&mut self, u: usize, v: usize, w: f64) {
        assert!(w >= 0.0, "edge weights must be non-negative");
        self.adjacency.add(u, v, w);
        if u != v {
            self.adjacency.add(v, u, w);
        }
    }

    /// Weighted degree: sum of incident edge weights (row sum of A).
    /// Equals the 1-hop neighbor count on unit-weight graphs.
    pub fn degree(&self, v: usize) -> Result<f64> {
        self.check_node(v)?;
        Ok(self.adjacency.row_sum(v))
    }

    /// Sum of the degrees of v's 1-hop neighbors.
    pub fn neighbor_degree_sum(&self, v: usize) -> Result<f64> {
        self.check_node(v)?;
        let mut sum = 0.0;
        for &(u, _) in self.adjacency.row(v) {
            if u != v {
                sum += self.adjacency.row_sum(u);
            }
        }
        Ok(sum)
    }

    /// Undirected edges (u <= v) with weights, sorted by (u, v).
    pub fn undirected_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, j, w) in self.adjacency.entries() {
            if i <= j {
                out.push((i, j, w));
            }
        }
        out
    }

    /// D^{-1/2} (A + I) D^{-1/2} where D is the diagonal degree matrix of
    /// A + I. Existing self-loop weights fold into the diagonal additively.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        let n = self.n();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|v| 1.0 / (self.adjacency.row_sum(v) + 1.0).sqrt())
            .collect();
        let mut out = SparseMatrix::zeros(n);
        for i in 0..n {
            let mut has_diag = false;
            for &(j, w) in self.adjacency.row(i) {
                let w = if i == j {
                    has_diag = true;
                    w + 1.0
                } else {
                    w
                };
                out.add(i, j, w * inv_sqrt[i] * inv_sqrt[j]);
            }
            if !has_diag {
                out.add(i, i, inv_sqrt[i] * inv_sqrt[i]);
            }
        }
        out
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.n() {
            return Err(Error::NodeOutOfRange {
                index: v,
                n: self.n(),
            });
        }
        Ok(())
    }
}

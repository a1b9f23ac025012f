//! Classification metrics (macro-F1, balanced accuracy) and the
//! continual-learning aggregates AP, AF, and short-term AF.
//!
//! Classes absent from the truth of a given test set are excluded from the
//! macro averages, so per-task class masking does not inject zeros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation: (macro-F1, balanced accuracy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub f1: f64,
    pub bacc: f64,
}

/// Lower-triangular matrix a[i][j]: metric on the test set of task j after
/// training task i (j <= i).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsMatrix {
    rows: Vec<Vec<Score>>,
}

impl MetricsMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the evaluations after training one more task; the row must
    /// have one more column than the previous.
    pub fn push_row(&mut self, row: Vec<Score>) {
        assert_eq!(row.len(), self.rows.len() + 1, "row must extend the triangle");
        self.rows.push(row);
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Score {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<Score>] {
        &self.rows
    }
}

fn check_inputs(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::EmptyInput("metric over empty predictions".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Unweighted mean over classes present in `truth` of per-class F1. A class
/// with no true positives and no predicted positives contributes 0.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_inputs(pred, truth)?;
    let c = truth.iter().chain(pred.iter()).max().unwrap() + 1;
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fal_neg = vec![0usize; c];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fal_neg[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for class in 0..c {
        if tp[class] + fal_neg[class] == 0 {
            continue; // class absent from truth
        }
        present += 1;
        let denom = 2 * tp[class] + fp[class] + fal_neg[class];
        if denom > 0 {
            sum += 2.0 * tp[class] as f64 / denom as f64;
        }
    }
    Ok(sum / present as f64)
}

/// Mean over classes present in `truth` of per-class recall.
pub fn bacc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_inputs(pred, truth)?;
    let c = truth.iter().max().unwrap() + 1;
    let mut tp = vec![0usize; c];
    let mut count = vec![0usize; c];
    for (&p, &t) in pred.iter().zip(truth) {
        count[t] += 1;
        if p == t {
            tp[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for class in 0..c {
        if count[class] > 0 {
            present += 1;
            sum += tp[class] as f64 / count[class] as f64;
        }
    }
    Ok(sum / present as f64)
}

fn aggregate(m: &MetricsMatrix, pick: impl Fn(Score) -> f64) -> (f64, f64) {
    let t = m.num_tasks();
    let last = &m.rows[t - 1];
    let ap = last.iter().map(|&s| pick(s)).sum::<f64>() / t as f64;
    let mut af = 0.0;
    for j in 0..t {
        let peak = (j..t).map(|l| pick(m.rows[l][j])).fold(f64::NEG_INFINITY, f64::max);
        af += peak - pick(last[j]);
    }
    (ap, af / t as f64)
}

/// AP = mean of the last row; AF = mean over tasks of peak-minus-final.
/// Returned per metric as ((f1_ap, f1_af), (bacc_ap, bacc_af)).
pub fn ap_af(m: &MetricsMatrix) -> Result<((f64, f64), (f64, f64))> {
    if m.num_tasks() == 0 {
        return Err(Error::EmptyInput("metrics matrix has no tasks".into()));
    }
    Ok((aggregate(m, |s| s.f1), aggregate(m, |s| s.bacc)))
}

/// Short-term forgetting: (1/T) Σ_{j=2..T} (a_{j-1,j-1} - a_{j,j-1}),
/// on the F1 metric. The sum has T-1 terms but divides by T.
pub fn af_st(m: &MetricsMatrix) -> Result<f64> {
    let t = m.num_tasks();
    if t < 2 {
        return Err(Error::EmptyInput("short-term forgetting needs >= 2 tasks".into()));
    }
    let mut sum = 0.0;
    for j in 1..t {
        sum += m.rows[j - 1][j - 1].f1 - m.rows[j][j - 1].f1;
    }
    Ok(sum / t as f64)
}

/// Report payload for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_ap: f64,
    pub f1_af: f64,
    pub bacc_ap: f64,
    pub bacc_af: f64,
    pub f1_af_st: Option<f64>,
    /// Lower-triangular rows of [f1, bacc] pairs.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

impl MetricsReport {
    pub fn from_matrix(m: &MetricsMatrix) -> Result<Self> {
        let ((f1_ap, f1_af), (bacc_ap, bacc_af)) = ap_af(m)?;
        Ok(MetricsReport {
            f1_ap,
            f1_af,
            bacc_ap,
            bacc_af,
            f1_af_st: af_st(m).ok(),
            matrix: m
                .rows
                .iter()
                .map(|row| row.iter().map(|s| [s.f1, s.bacc]).collect())
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(v: f64) -> Score {
        Score { f1: v, bacc: v }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth = vec![0, 1, 2, 1, 0];
        assert_eq!(macro_f1(&truth, &truth).unwrap(), 1.0);
        assert_eq!(bacc(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn macro_f1_worked_example() {
        // truth (0,0,1,1), pred all 0: class-0 F1 = 2/3, class-1 F1 = 0.
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 0];
        assert!((macro_f1(&pred, &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_all_wrong_is_zero() {
        assert_eq!(macro_f1(&[1, 0], &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn bacc_worked_example() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 0];
        assert!((bacc(&pred, &truth).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bacc_uniform_random_approaches_reciprocal_classes() {
        use rand::Rng as _;
        use rand::SeedableRng as _;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
        let c = 4;
        let n = 10_000;
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let got = bacc(&pred, &truth).unwrap();
        assert!((got - 1.0 / c as f64).abs() < 0.05, "bacc {got}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(macro_f1(&[], &[]).is_err());
        assert!(bacc(&[], &[]).is_err());
    }

    #[test]
    fn metrics_exclude_absent_classes() {
        // Class 2 never appears in truth; prediction of it costs precision
        // via fp but adds no class term.
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 1, 1];
        let f1_full = macro_f1(&pred, &truth).unwrap();
        assert_eq!(f1_full, 1.0);
        let truth5 = vec![0, 0, 1, 1, 1];
        let pred5 = vec![0, 0, 1, 1, 2];
        let f1 = macro_f1(&pred5, &truth5).unwrap();
        // class 0: perfect; class 1: p=1, r=2/3 -> 0.8; class 2 absent.
        assert!((f1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn relabeling_invariance() {
        let truth = vec![0, 1, 2, 2, 1, 0, 0];
        let pred = vec![0, 2, 2, 1, 1, 0, 1];
        let map = [2usize, 0, 1];
        let truth2: Vec<usize> = truth.iter().map(|&t| map[t]).collect();
        let pred2: Vec<usize> = pred.iter().map(|&p| map[p]).collect();
        assert!((macro_f1(&pred, &truth).unwrap() - macro_f1(&pred2, &truth2).unwrap()).abs() < 1e-15);
        assert!((bacc(&pred, &truth).unwrap() - bacc(&pred2, &truth2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn single_task_ap_af() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.8)]);
        let ((f1_ap, f1_af), _) = ap_af(&m).unwrap();
        assert_eq!(f1_ap, 0.8);
        assert_eq!(f1_af, 0.0);
    }

    #[test]
    fn two_task_ap_af_worked_example() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.9)]);
        m.push_row(vec![score(0.7), score(0.8)]);
        let ((f1_ap, f1_af), _) = ap_af(&m).unwrap();
        assert!((f1_ap - 0.75).abs() < 1e-15);
        assert!((f1_af - 0.1).abs() < 1e-15);
    }

    #[test]
    fn af_nonnegative_when_columns_non_increasing() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.9)]);
        m.push_row(vec![score(0.8), score(0.85)]);
        m.push_row(vec![score(0.75), score(0.8), score(0.9)]);
        let ((_, f1_af), _) = ap_af(&m).unwrap();
        assert!(f1_af >= 0.0);
    }

    #[test]
    fn af_zero_for_constant_columns() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.6)]);
        m.push_row(vec![score(0.6), score(0.7)]);
        let ((_, f1_af), _) = ap_af(&m).unwrap();
        assert_eq!(f1_af, 0.0);
    }

    #[test]
    fn af_zero_when_last_row_dominates() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.5)]);
        m.push_row(vec![score(0.9), score(0.8)]);
        let ((_, f1_af), _) = ap_af(&m).unwrap();
        assert_eq!(f1_af, 0.0);
    }

    #[test]
    fn af_st_constant_matrix_is_zero() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.7)]);
        m.push_row(vec![score(0.7), score(0.7)]);
        assert_eq!(af_st(&m).unwrap(), 0.0);
    }

    #[test]
    fn af_st_worked_example() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.9)]);
        m.push_row(vec![score(0.7), score(0.8)]);
        assert!((af_st(&m).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn af_st_can_be_negative_on_backward_transfer() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.6)]);
        m.push_row(vec![score(0.9), score(0.8)]);
        assert!(af_st(&m).unwrap() < 0.0);
    }

    #[test]
    fn af_st_requires_two_tasks() {
        let mut m = MetricsMatrix::new();
        m.push_row(vec![score(0.9)]);
        assert!(af_st(&m).is_err());
    }
}

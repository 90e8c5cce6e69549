//! Forecast accuracy metrics.
//!
//! `erp_threshold` is the thresholded edit distance reported under the ERP
//! name: values whose difference is within `epsilon` match for free, every
//! other substitution, insertion or deletion costs one edit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.03;

fn same_len(gt: &[f64], pred: &[f64]) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(Error::invalid(format!(
            "ground truth has {} points, prediction {}",
            gt.len(),
            pred.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::invalid("metrics need at least one point"));
    }
    Ok(())
}

/// `100 · Σ|gt − pred| / Σ gt`.
pub fn wape(gt: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(gt, pred)?;
    let total: f64 = gt.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("WAPE is undefined when ground truth sums to zero"));
    }
    let abs: f64 = gt.iter().zip(pred).map(|(g, p)| (g - p).abs()).sum();
    Ok(100.0 * abs / total)
}

pub fn mae(gt: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(gt, pred)?;
    Ok(gt.iter().zip(pred).map(|(g, p)| (g - p).abs()).sum::<f64>() / gt.len() as f64)
}

/// Mean of `|gt − pred| / |gt|`, as a fraction.
pub fn mape(gt: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(gt, pred)?;
    if let Some(i) = gt.iter().position(|g| *g == 0.0) {
        return Err(Error::invalid(format!(
            "MAPE is undefined: ground truth is zero at {i}"
        )));
    }
    Ok(gt.iter().zip(pred).map(|(g, p)| ((g - p) / g).abs()).sum::<f64>() / gt.len() as f64)
}

/// Minimum number of edits turning `a` into `b` when values within
/// `epsilon` of each other count as equal.
pub fn edit_distance_eps(a: &[f64], b: &[f64], epsilon: f64) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let subst = prev[j] + usize::from((x - y).abs() > epsilon);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Both series are divided by `max(gt)`, the edit count is divided by the
/// longer length, so the result lies in `[0, 1]`.
pub fn erp_threshold(gt: &[f64], pred: &[f64], epsilon: f64) -> Result<f64> {
    if gt.is_empty() || pred.is_empty() {
        return Err(Error::invalid("edit distance needs non-empty series"));
    }
    let scale = gt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(scale > 0.0) {
        return Err(Error::invalid("edit distance needs a positive ground-truth maximum"));
    }
    let a: Vec<f64> = gt.iter().map(|v| v / scale).collect();
    let b: Vec<f64> = pred.iter().map(|v| v / scale).collect();
    let edits = edit_distance_eps(&a, &b, epsilon);
    Ok(edits as f64 / gt.len().max(pred.len()) as f64)
}

/// All four metrics; a metric undefined for this ground truth is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub wape: Option<f64>,
    pub mae: f64,
    pub mape: Option<f64>,
    pub erp: Option<f64>,
}

impl MetricReport {
    pub fn evaluate(gt: &[f64], pred: &[f64], epsilon: f64) -> Result<Self> {
        same_len(gt, pred)?;
        Ok(MetricReport {
            wape: wape(gt, pred).ok(),
            mae: mae(gt, pred)?,
            mape: mape(gt, pred).ok(),
            erp: erp_threshold(gt, pred, epsilon).ok(),
        })
    }

    pub const CSV_HEADER: [&'static str; 4] = ["wape", "mae", "mape", "erp"];

    pub fn csv_fields(&self) -> [String; 4] {
        let f = |v: Option<f64>| v.map(crate::series::format_sig9).unwrap_or_default();
        [f(self.wape), f(Some(self.mae)), f(self.mape), f(self.erp)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wape_examples() {
        assert_eq!(wape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let w = wape(&[10.0, 20.0, 30.0], &[12.0, 18.0, 33.0]).unwrap();
        assert!((w - 11.6666667).abs() < 1e-7);
        let gt = [3.0, 5.0, 1.0];
        let double: Vec<f64> = gt.iter().map(|v| v * 2.0).collect();
        let triple: Vec<f64> = gt.iter().map(|v| v * 3.0).collect();
        assert!((wape(&gt, &double).unwrap() - 100.0).abs() < 1e-12);
        assert!((wape(&gt, &triple).unwrap() - 200.0).abs() < 1e-12);
        assert!(wape(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[4.0], &[4.0]).unwrap(), 0.0);
        let m = mae(&[10.0, 20.0, 30.0], &[12.0, 18.0, 33.0]).unwrap();
        assert!((m - 2.3333333).abs() < 1e-7);
        assert_eq!(mae(&[2.0], &[-1.5]).unwrap(), 3.5);
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mape(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!((mape(&[1.0, 4.0, -2.0], &[2.0, 8.0, -4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(mape(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn erp_examples() {
        assert_eq!(erp_threshold(&[0.2, 0.4], &[0.2, 0.4], 0.03).unwrap(), 0.0);
        assert_eq!(erp_threshold(&[0.0, 0.5], &[0.0, 0.56], 0.03).unwrap(), 0.5);
        assert_eq!(erp_threshold(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5], 0.03).unwrap(), 1.0);
        assert!(erp_threshold(&[0.0, 0.0], &[0.0, 0.0], 0.03).is_err());
        assert!(erp_threshold(&[], &[1.0], 0.03).is_err());
    }

    /// Plain recursive definition of the thresholded edit distance.
    fn brute(a: &[f64], b: &[f64], eps: f64) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let (x, y) = (a[a.len() - 1], b[b.len() - 1]);
        let sub = brute(&a[..a.len() - 1], &b[..b.len() - 1], eps) + usize::from((x - y).abs() > eps);
        let del = brute(&a[..a.len() - 1], b, eps) + 1;
        let ins = brute(a, &b[..b.len() - 1], eps) + 1;
        sub.min(del).min(ins)
    }

    proptest! {
        #[test]
        fn dp_matches_recursion(
            a in prop::collection::vec(0.0f64..0.2, 1..7),
            b in prop::collection::vec(0.0f64..0.2, 1..7),
        ) {
            prop_assert_eq!(edit_distance_eps(&a, &b, 0.03), brute(&a, &b, 0.03));
        }

        #[test]
        fn identity_and_symmetry(a in prop::collection::vec(-1.0f64..1.0, 1..10),
                                 b in prop::collection::vec(-1.0f64..1.0, 1..10)) {
            prop_assert_eq!(edit_distance_eps(&a, &a, 0.03), 0);
            prop_assert_eq!(edit_distance_eps(&a, &b, 0.03), edit_distance_eps(&b, &a, 0.03));
        }

        #[test]
        fn scaling_behaviour(gt in prop::collection::vec(0.1f64..10.0, 1..12),
                             noise in prop::collection::vec(-1.0f64..1.0, 12),
                             c in 0.1f64..50.0) {
            let pred: Vec<f64> = gt.iter().zip(&noise).map(|(g, n)| g + n).collect();
            let gs: Vec<f64> = gt.iter().map(|v| v * c).collect();
            let ps: Vec<f64> = pred.iter().map(|v| v * c).collect();
            let (m0, m1) = (mae(&gt, &pred).unwrap(), mae(&gs, &ps).unwrap());
            prop_assert!((m1 - c * m0).abs() <= 1e-9 * m1.max(1.0));
            let (w0, w1) = (wape(&gt, &pred).unwrap(), wape(&gs, &ps).unwrap());
            prop_assert!((w1 - w0).abs() <= 1e-9 * w0.max(1.0));
        }
    }
}

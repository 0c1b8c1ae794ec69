//! Overlap metrics and their aggregation.
//!
//! Masks are flat slices where any nonzero value is foreground; masks of any
//! dimensionality compare equal-length buffers.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Slice,
    Volume,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Slice => "SLICE",
            Scope::Volume => "VOLUME",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub lesion_id: String,
    pub scope: Scope,
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricRecord {
    pub fn compute(lesion_id: &str, scope: Scope, pred: &[u8], gt: &[u8]) -> Result<Self> {
        let d = dice(pred, gt)?;
        let (precision, recall) = precision_recall(pred, gt)?;
        Ok(Self {
            lesion_id: lesion_id.to_string(),
            scope,
            dice: d,
            precision,
            recall,
        })
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch(format!("masks of {a} and {b} elements")));
    }
    Ok(())
}

/// `(|A and B|, |A|, |B|)`.
fn overlap(a: &[u8], b: &[u8]) -> (usize, usize, usize) {
    let mut both = 0;
    let mut na = 0;
    let mut nb = 0;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x != 0, y != 0);
        both += usize::from(x && y);
        na += usize::from(x);
        nb += usize::from(y);
    }
    (both, na, nb)
}

/// `2|A and B| / (|A| + |B|)`, 1 when both masks are empty.
pub fn dice(a: &[u8], b: &[u8]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let (both, na, nb) = overlap(a, b);
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Pixel precision and recall. Precision is 1 without predictions, recall
/// is 1 for an empty ground truth.
pub fn precision_recall(pred: &[u8], gt: &[u8]) -> Result<(f64, f64)> {
    check_len(pred.len(), gt.len())?;
    let (tp, np, ng) = overlap(pred, gt);
    let precision = if np == 0 { 1.0 } else { tp as f64 / np as f64 };
    let recall = if ng == 0 { 1.0 } else { tp as f64 / ng as f64 };
    Ok((precision, recall))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of `{prob >= t}` for `n_thresholds` values of `t`
/// evenly spaced on `[0, 1]`.
pub fn pr_curve(prob: &[f64], gt: &[u8], n_thresholds: usize) -> Result<Vec<PrPoint>> {
    check_len(prob.len(), gt.len())?;
    if n_thresholds < 2 {
        return Err(Error::InvalidParam("n_thresholds must be >= 2".into()));
    }
    let n_gt = gt.iter().filter(|&&g| g != 0).count();
    Ok((0..n_thresholds)
        .map(|k| {
            let t = k as f64 / (n_thresholds - 1) as f64;
            let mut tp = 0usize;
            let mut np = 0usize;
            for (&p, &g) in prob.iter().zip(gt) {
                if p >= t {
                    np += 1;
                    tp += usize::from(g != 0);
                }
            }
            PrPoint {
                threshold: t,
                precision: if np == 0 { 1.0 } else { tp as f64 / np as f64 },
                recall: if n_gt == 0 { 1.0 } else { tp as f64 / n_gt as f64 },
            }
        })
        .collect())
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::Empty("metric values"));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    // summation order fixed so that the result does not depend on input order
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub dice: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
}

pub fn aggregate(records: &[MetricRecord]) -> Result<Aggregate> {
    let col = |f: fn(&MetricRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    Ok(Aggregate {
        dice: mean_std(&col(|r| r.dice))?,
        precision: mean_std(&col(|r| r.precision))?,
        recall: mean_std(&col(|r| r.recall))?,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut s = String::from("lesion_id,scope,dice,precision,recall\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.lesion_id,
            r.scope.as_str(),
            r.dice,
            r.precision,
            r.recall
        ));
    }
    s
}

pub fn write_metrics_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    write_text(path, &metrics_csv(records))
}

pub fn pr_csv(points: &[PrPoint]) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for p in points {
        s.push_str(&format!(
            "{:.6},{:.6},{:.6}\n",
            p.threshold, p.precision, p.recall
        ));
    }
    s
}

pub fn write_pr_csv(path: &Path, points: &[PrPoint]) -> Result<()> {
    write_text(path, &pr_csv(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(n: usize, on: &[usize]) -> Vec<u8> {
        let mut m = vec![0u8; n];
        for &i in on {
            m[i] = 1;
        }
        m
    }

    #[test]
    fn dice_examples() {
        let a = mask(10, &[0, 1, 2, 3]);
        let b = mask(10, &[1, 2, 3, 4, 5, 6]);
        assert!((dice(&a, &b).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &mask(10, &[7, 8])).unwrap(), 0.0);
        assert_eq!(dice(&mask(4, &[]), &mask(4, &[])).unwrap(), 1.0);
        assert!(dice(&a, &mask(9, &[])).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let gt = mask(8, &[0, 1]);
        assert_eq!(precision_recall(&gt, &gt).unwrap(), (1.0, 1.0));
        assert_eq!(
            precision_recall(&mask(8, &[0, 1, 2, 3]), &gt).unwrap(),
            (0.5, 1.0)
        );
        assert_eq!(precision_recall(&mask(8, &[]), &gt).unwrap(), (1.0, 0.0));
        assert!(precision_recall(&gt, &mask(3, &[])).is_err());
    }

    #[test]
    fn three_voxel_pr_table() {
        let curve = pr_curve(&[0.9, 0.6, 0.1], &[1, 1, 0], 5).unwrap();
        // t = 0, 0.25, 0.5, 0.75, 1
        let expect = [
            (0.0, 2.0 / 3.0, 1.0),
            (0.25, 1.0, 1.0),
            (0.5, 1.0, 1.0),
            (0.75, 1.0, 0.5),
            (1.0, 1.0, 0.0),
        ];
        for (p, e) in curve.iter().zip(expect) {
            assert_eq!((p.threshold, p.precision, p.recall), e);
        }
        assert!(pr_curve(&[0.5], &[1], 1).is_err());
    }

    #[test]
    fn crisp_probability_is_perfect_at_half() {
        let gt = [1u8, 0, 1, 1, 0];
        let prob: Vec<f64> = gt.iter().map(|&g| g as f64).collect();
        let curve = pr_curve(&prob, &gt, 3).unwrap();
        assert_eq!((curve[1].precision, curve[1].recall), (1.0, 1.0));
    }

    #[test]
    fn aggregate_examples() {
        let rec = |d: f64| MetricRecord {
            lesion_id: "x".into(),
            scope: Scope::Volume,
            dice: d,
            precision: d,
            recall: d,
        };
        let one = aggregate(&[rec(0.8)]).unwrap();
        assert_eq!((one.dice.mean, one.dice.std), (0.8, 0.0));
        let two = aggregate(&[rec(0.8), rec(0.6)]).unwrap();
        assert!((two.dice.mean - 0.7).abs() < 1e-12);
        assert!((two.dice.std - 0.1).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_format() {
        let r = MetricRecord {
            lesion_id: "les_001".into(),
            scope: Scope::Slice,
            dice: 0.5,
            precision: 2.0 / 3.0,
            recall: 1.0,
        };
        assert_eq!(
            metrics_csv(&[r]),
            "lesion_id,scope,dice,precision,recall\nles_001,SLICE,0.500000,0.666667,1.000000\n"
        );
    }

    proptest! {
        #[test]
        fn f1_equals_dice(a in proptest::collection::vec(0u8..2, 1..200), seed in any::<u64>()) {
            let b: Vec<u8> = a.iter().enumerate().map(|(i, &x)| {
                let h = (seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)).count_ones();
                if h.is_multiple_of(3) { 1 - x } else { x }
            }).collect();
            let (p, r) = precision_recall(&a, &b).unwrap();
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            prop_assert!((f1 - dice(&a, &b).unwrap()).abs() < 1e-9);
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        }

        #[test]
        fn recall_non_increasing(prob in proptest::collection::vec(0.0f64..=1.0, 1..100), n in 2usize..30) {
            let gt: Vec<u8> = prob.iter().enumerate().map(|(i, _)| (i % 3 == 0) as u8).collect();
            let curve = pr_curve(&prob, &gt, n).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[1].recall <= w[0].recall);
            }
            prop_assert_eq!(curve[0].recall, 1.0);
        }

        #[test]
        fn aggregate_is_order_invariant(mut v in proptest::collection::vec(0.0f64..=1.0, 1..50)) {
            let a = mean_std(&v).unwrap();
            v.reverse();
            prop_assert_eq!(a, mean_std(&v).unwrap());
        }
    }
}

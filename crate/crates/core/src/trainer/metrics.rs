//! Percentage-error metrics: MAPE, RMSPE, and accuracy within x% relative
//! error, computed on denormalized (physical-unit) values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub mape: f64,
    pub rmspe: f64,
    pub acc_at_5: f64,
    pub acc_at_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_target: BTreeMap<String, TargetMetrics>,
    pub mean_mape: f64,
    pub mean_rmspe: f64,
    pub mean_acc_at_5: f64,
    pub mean_acc_at_10: f64,
    pub sample_count: usize,
}

/// One dumped prediction row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRow {
    pub graph_id: String,
    pub target: String,
    pub y_true: f64,
    pub y_pred: f64,
}

/// Computes the report from (y_true, y_pred) pairs grouped per target, in the
/// given order. Errors on any zero true value (percentage metrics undefined).
pub fn compute_metrics(
    pairs: &BTreeMap<String, Vec<(f64, f64)>>,
) -> Result<MetricsReport, TrainError> {
    let mut per_target = BTreeMap::new();
    let mut sample_count = 0;
    for (target, rows) in pairs {
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let mut abs_sum = 0.0;
        let mut sq_sum = 0.0;
        let mut within5 = 0usize;
        let mut within10 = 0usize;
        for &(y, y_hat) in rows {
            if y == 0.0 {
                return Err(TrainError::ZeroTarget {
                    target: target.clone(),
                });
            }
            let rel = (y_hat - y) / y;
            abs_sum += rel.abs();
            sq_sum += rel * rel;
            if rel.abs() <= 0.05 {
                within5 += 1;
            }
            if rel.abs() <= 0.10 {
                within10 += 1;
            }
        }
        sample_count += rows.len();
        per_target.insert(
            target.clone(),
            TargetMetrics {
                mape: abs_sum / n * 100.0,
                rmspe: (sq_sum / n).sqrt() * 100.0,
                acc_at_5: within5 as f64 / n * 100.0,
                acc_at_10: within10 as f64 / n * 100.0,
            },
        );
    }
    let t = per_target.len().max(1) as f64;
    Ok(MetricsReport {
        mean_mape: per_target.values().map(|m| m.mape).sum::<f64>() / t,
        mean_rmspe: per_target.values().map(|m| m.rmspe).sum::<f64>() / t,
        mean_acc_at_5: per_target.values().map(|m| m.acc_at_5).sum::<f64>() / t,
        mean_acc_at_10: per_target.values().map(|m| m.acc_at_10).sum::<f64>() / t,
        per_target,
        sample_count,
    })
}

/// Groups prediction rows by target (row order preserved within each target)
/// and computes the report. Produces bit-identical results to the in-process
/// path for the same rows.
pub fn metrics_from_rows(rows: &[PredRow]) -> Result<MetricsReport, TrainError> {
    let mut pairs: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        pairs
            .entry(r.target.clone())
            .or_default()
            .push((r.y_true, r.y_pred));
    }
    compute_metrics(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(target: &str, rows: &[(f64, f64)]) -> BTreeMap<String, Vec<(f64, f64)>> {
        let mut m = BTreeMap::new();
        m.insert(target.to_string(), rows.to_vec());
        m
    }

    #[test]
    fn single_point_arithmetic() {
        // ŷ=110, y=100: MAPE 10, RMSPE 10, acc5 0, acc10 100
        let r = compute_metrics(&single("t", &[(100.0, 110.0)])).unwrap();
        let m = &r.per_target["t"];
        assert!((m.mape - 10.0).abs() < 1e-12);
        assert!((m.rmspe - 10.0).abs() < 1e-12);
        assert_eq!(m.acc_at_5, 0.0);
        assert_eq!(m.acc_at_10, 100.0);
    }

    #[test]
    fn perfect_predictions_are_zero_error() {
        let r = compute_metrics(&single("t", &[(5.0, 5.0), (7.0, 7.0)])).unwrap();
        let m = &r.per_target["t"];
        assert_eq!(m.mape, 0.0);
        assert_eq!(m.rmspe, 0.0);
        assert_eq!(m.acc_at_5, 100.0);
        assert_eq!(m.acc_at_10, 100.0);
    }

    #[test]
    fn hand_pair_set_matches_closed_form() {
        // {(110,100),(95,100)}: MAPE 7.5, RMSPE sqrt((0.01+0.0025)/2)·100
        let r = compute_metrics(&single("t", &[(100.0, 110.0), (100.0, 95.0)])).unwrap();
        let m = &r.per_target["t"];
        assert!((m.mape - 7.5).abs() < 1e-9);
        assert!((m.rmspe - 7.905694150420948).abs() < 1e-6);
    }

    #[test]
    fn zero_target_is_rejected() {
        let err = compute_metrics(&single("t", &[(0.0, 1.0)])).unwrap_err();
        assert!(matches!(err, TrainError::ZeroTarget { .. }));
    }

    #[test]
    fn mean_over_targets() {
        let mut pairs = BTreeMap::new();
        pairs.insert("a".to_string(), vec![(100.0, 110.0)]);
        pairs.insert("b".to_string(), vec![(100.0, 120.0)]);
        let r = compute_metrics(&pairs).unwrap();
        assert!((r.mean_mape - 15.0).abs() < 1e-12);
        assert_eq!(r.sample_count, 2);
    }

    #[test]
    fn rows_roundtrip_is_bit_identical() {
        let rows = vec![
            PredRow {
                graph_id: "g0".into(),
                target: "t".into(),
                y_true: 0.123456789012345,
                y_pred: 0.123999,
            },
            PredRow {
                graph_id: "g1".into(),
                target: "t".into(),
                y_true: 3.0e-4,
                y_pred: 2.9e-4,
            },
        ];
        let a = metrics_from_rows(&rows).unwrap();
        let b = metrics_from_rows(&rows).unwrap();
        assert_eq!(a, b);
    }
}

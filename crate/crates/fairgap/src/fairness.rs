//! Group confusion tallies and fairness/accuracy metrics.
//!
//! All gaps are signed as (group 0 rate) - (group 1 rate), with group 0
//! the disadvantaged group. Tallies are weighted sums, so they reduce to
//! plain counts under unit weights.

use crate::error::{Error, Result};
use crate::mitigation::MitigationConfig;
use crate::models::{forward, ForwardMode, ModelSpec, ModelState};
use crate::tabular::Dataset;
use serde::{Deserialize, Serialize};

/// Weighted TP/FP/TN/FN tallies per protected group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub tp: [f64; 2],
    pub fp: [f64; 2],
    pub tn: [f64; 2],
    pub fn_: [f64; 2],
}

impl GroupConfusion {
    pub fn total(&self) -> f64 {
        (0..2).map(|g| self.tp[g] + self.fp[g] + self.tn[g] + self.fn_[g]).sum()
    }
}

/// Accumulate weighted confusion tallies per group.
pub fn group_confusion(y: &[u8], y_hat: &[u8], z: &[u8], w: &[f64]) -> Result<GroupConfusion> {
    if y.len() != y_hat.len() || y.len() != z.len() || y.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "y {}, y_hat {}, z {}, w {}",
            y.len(),
            y_hat.len(),
            z.len(),
            w.len()
        )));
    }
    let mut c = GroupConfusion::default();
    for i in 0..y.len() {
        let g = z[i] as usize;
        match (y[i], y_hat[i]) {
            (1, 1) => c.tp[g] += w[i],
            (0, 1) => c.fp[g] += w[i],
            (0, 0) => c.tn[g] += w[i],
            (1, 0) => c.fn_[g] += w[i],
            _ => return Err(Error::Config("labels must be binary".into())),
        }
    }
    Ok(c)
}

/// FNR gap = fn0/(tp0+fn0) - fn1/(tp1+fn1).
pub fn fnr_gap(c: &GroupConfusion) -> Result<f64> {
    let mut rates = [0.0; 2];
    for g in 0..2 {
        let denom = c.tp[g] + c.fn_[g];
        if denom == 0.0 {
            return Err(Error::UndefinedMetric { metric: "fnr", group: g as u8 });
        }
        rates[g] = c.fn_[g] / denom;
    }
    Ok(rates[0] - rates[1])
}

/// FPR gap = fp0/(tn0+fp0) - fp1/(tn1+fp1).
pub fn fpr_gap(c: &GroupConfusion) -> Result<f64> {
    let mut rates = [0.0; 2];
    for g in 0..2 {
        let denom = c.tn[g] + c.fp[g];
        if denom == 0.0 {
            return Err(Error::UndefinedMetric { metric: "fpr", group: g as u8 });
        }
        rates[g] = c.fp[g] / denom;
    }
    Ok(rates[0] - rates[1])
}

/// F1 gap = tp0/(tp0 + 0.5(fp0+fn0)) - tp1/(tp1 + 0.5(fp1+fn1)).
pub fn f1_gap(c: &GroupConfusion) -> Result<f64> {
    let mut scores = [0.0; 2];
    for g in 0..2 {
        let denom = c.tp[g] + 0.5 * (c.fp[g] + c.fn_[g]);
        if denom == 0.0 {
            return Err(Error::UndefinedMetric { metric: "f1", group: g as u8 });
        }
        scores[g] = c.tp[g] / denom;
    }
    Ok(scores[0] - scores[1])
}

/// Sample-weighted accuracy: sum of matching-row weights over total weight.
pub fn weighted_accuracy(y: &[u8], y_hat: &[u8], w: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "y {}, y_hat {}, w {}",
            y.len(),
            y_hat.len(),
            w.len()
        )));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("total weight must be positive".into()));
    }
    let hit: f64 = (0..y.len()).filter(|&i| y[i] == y_hat[i]).map(|i| w[i]).sum();
    Ok(hit / total)
}

/// Per-group rates plus signed gaps. Rates undefined because of an
/// empty cell are absent rather than silently zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    pub fnr_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
    pub f1_gap: Option<f64>,
    pub weighted_accuracy: f64,
    pub group_fnr: [Option<f64>; 2],
    pub group_fpr: [Option<f64>; 2],
    pub group_f1: [Option<f64>; 2],
    pub group_accuracy: [Option<f64>; 2],
    pub counts: GroupConfusion,
}

/// Build a report from raw predictions.
pub fn report_from_predictions(
    y: &[u8],
    y_hat: &[u8],
    z: &[u8],
    w: &[f64],
) -> Result<FairnessReport> {
    let c = group_confusion(y, y_hat, z, w)?;
    let per_group = |num: &dyn Fn(usize) -> f64, den: &dyn Fn(usize) -> f64| {
        let mut out = [None; 2];
        for (g, slot) in out.iter_mut().enumerate() {
            let d = den(g);
            if d > 0.0 {
                *slot = Some(num(g) / d);
            }
        }
        out
    };
    let group_fnr = per_group(&|g| c.fn_[g], &|g| c.tp[g] + c.fn_[g]);
    let group_fpr = per_group(&|g| c.fp[g], &|g| c.tn[g] + c.fp[g]);
    let group_f1 = per_group(&|g| c.tp[g], &|g| c.tp[g] + 0.5 * (c.fp[g] + c.fn_[g]));
    let group_accuracy = per_group(
        &|g| c.tp[g] + c.tn[g],
        &|g| c.tp[g] + c.tn[g] + c.fp[g] + c.fn_[g],
    );
    let gap = |r: [Option<f64>; 2]| Some(r[0]? - r[1]?);
    Ok(FairnessReport {
        fnr_gap: gap(group_fnr),
        fpr_gap: gap(group_fpr),
        f1_gap: gap(group_f1),
        weighted_accuracy: weighted_accuracy(y, y_hat, w)?,
        group_fnr,
        group_fpr,
        group_f1,
        group_accuracy,
        counts: c,
    })
}

/// Evaluate a trained model on a dataset and report all metrics.
/// Predictions are thresholded Eval-mode probabilities.
pub fn audit(
    state: &ModelState,
    spec: &ModelSpec,
    dataset: &Dataset,
    threshold: f64,
) -> Result<FairnessReport> {
    let (probs, _) = forward(state, spec, &dataset.features, ForwardMode::Eval)?;
    let y_hat: Vec<u8> = probs.iter().map(|&p| u8::from(p >= threshold)).collect();
    report_from_predictions(&dataset.labels, &y_hat, &dataset.protected, &dataset.weights)
}

/// Epoch-level loss components of the fairness-regularized objective,
/// evaluated on a dataset in Eval mode. Used for training traces.
pub fn loss_components(
    state: &ModelState,
    spec: &ModelSpec,
    dataset: &Dataset,
    cfg: &MitigationConfig,
) -> Result<(f64, f64)> {
    let (probs, _) = forward(state, spec, &dataset.features, ForwardMode::Eval)?;
    let p = probs.as_slice().unwrap();
    crate::mitigation::loss_terms(
        p,
        &dataset.labels,
        &dataset.protected,
        &dataset.weights,
        cfg,
    )
}

impl FairnessReport {
    /// Flat CSV row used for sweep aggregation; absent metrics render
    /// as empty fields.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{}",
            opt(self.fnr_gap),
            opt(self.fpr_gap),
            opt(self.f1_gap),
            self.weighted_accuracy
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_hand_count() {
        let c = group_confusion(&[1, 0], &[1, 0], &[0, 1], &[1.0, 1.0]).unwrap();
        assert_eq!(c.tp[0], 1.0);
        assert_eq!(c.tn[1], 1.0);
        assert_eq!(c.fp, [0.0, 0.0]);
        assert_eq!(c.fn_, [0.0, 0.0]);
    }

    #[test]
    fn confusion_total_misclassification() {
        let y = [1u8, 0, 1, 0];
        let y_hat: Vec<u8> = y.iter().map(|&v| 1 - v).collect();
        let c = group_confusion(&y, &y_hat, &[0, 0, 1, 1], &[1.0; 4]).unwrap();
        assert_eq!(c.tp, [0.0, 0.0]);
        assert_eq!(c.tn, [0.0, 0.0]);
    }

    #[test]
    fn confusion_linear_in_weights() {
        let y = [1u8, 0, 1];
        let y_hat = [1u8, 1, 0];
        let z = [0u8, 1, 1];
        let w1 = [1.0, 2.0, 3.0];
        let w2: Vec<f64> = w1.iter().map(|w| w * 2.0).collect();
        let a = group_confusion(&y, &y_hat, &z, &w1).unwrap();
        let b = group_confusion(&y, &y_hat, &z, &w2).unwrap();
        for g in 0..2 {
            assert_eq!(b.tp[g], 2.0 * a.tp[g]);
            assert_eq!(b.fn_[g], 2.0 * a.fn_[g]);
        }
    }

    #[test]
    fn fnr_gap_hand_value() {
        let c = GroupConfusion {
            tp: [3.0, 4.0],
            fn_: [1.0, 0.0],
            ..Default::default()
        };
        assert_eq!(fnr_gap(&c).unwrap(), 0.25);
    }

    #[test]
    fn gaps_zero_for_identical_groups() {
        let c = GroupConfusion {
            tp: [3.0, 3.0],
            fp: [1.0, 1.0],
            tn: [2.0, 2.0],
            fn_: [1.0, 1.0],
        };
        assert_eq!(fnr_gap(&c).unwrap(), 0.0);
        assert_eq!(fpr_gap(&c).unwrap(), 0.0);
        assert_eq!(f1_gap(&c).unwrap(), 0.0);
    }

    #[test]
    fn gap_antisymmetry_under_group_swap() {
        let c = GroupConfusion {
            tp: [3.0, 5.0],
            fp: [2.0, 1.0],
            tn: [4.0, 6.0],
            fn_: [1.0, 2.0],
        };
        let swapped = GroupConfusion {
            tp: [c.tp[1], c.tp[0]],
            fp: [c.fp[1], c.fp[0]],
            tn: [c.tn[1], c.tn[0]],
            fn_: [c.fn_[1], c.fn_[0]],
        };
        assert!((fnr_gap(&c).unwrap() + fnr_gap(&swapped).unwrap()).abs() < 1e-15);
        assert!((fpr_gap(&c).unwrap() + fpr_gap(&swapped).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn fnr_gap_zero_denominator_errors() {
        let c = GroupConfusion {
            tp: [0.0, 4.0],
            fn_: [0.0, 1.0],
            ..Default::default()
        };
        match fnr_gap(&c) {
            Err(Error::UndefinedMetric { metric, group }) => {
                assert_eq!(metric, "fnr");
                assert_eq!(group, 0);
            }
            other => panic!("expected UndefinedMetric, got {other:?}"),
        }
    }

    #[test]
    fn f1_gap_hand_value() {
        let c = GroupConfusion {
            tp: [2.0, 3.0],
            fp: [1.0, 0.0],
            fn_: [1.0, 1.0],
            ..Default::default()
        };
        // 2/3 - 3/3.5
        let expect = 2.0 / 3.0 - 3.0 / 3.5;
        assert!((f1_gap(&c).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn weighted_accuracy_values() {
        let y = [1u8, 0, 1];
        assert_eq!(weighted_accuracy(&y, &y, &[1.0; 3]).unwrap(), 1.0);
        // y=[1,0,1], y_hat=[1,1,1], w=[2,1,1] -> 3/4
        assert_eq!(
            weighted_accuracy(&y, &[1, 1, 1], &[2.0, 1.0, 1.0]).unwrap(),
            0.75
        );
        // unit weights reduce to plain accuracy
        assert!(
            (weighted_accuracy(&y, &[1, 1, 1], &[1.0; 3]).unwrap() - 2.0 / 3.0).abs() < 1e-15
        );
    }

    #[test]
    fn report_oracle_predictions() {
        let y = [1u8, 0, 1, 0, 1, 0];
        let z = [0u8, 0, 0, 1, 1, 1];
        let r = report_from_predictions(&y, &y, &z, &[1.0; 6]).unwrap();
        assert_eq!(r.fnr_gap, Some(0.0));
        assert_eq!(r.fpr_gap, Some(0.0));
        assert_eq!(r.f1_gap, Some(0.0));
        assert_eq!(r.weighted_accuracy, 1.0);
    }

    #[test]
    fn report_absent_metric_when_group_cell_empty() {
        // no positives in group 1 -> FNR undefined there
        let y = [1u8, 0];
        let z = [0u8, 1];
        let r = report_from_predictions(&y, &[1, 0], &z, &[1.0; 2]).unwrap();
        assert!(r.fnr_gap.is_none());
        assert!(r.group_fnr[1].is_none());
        assert_eq!(r.group_fnr[0], Some(0.0));
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn instance() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<u8>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0.1f64..5.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        // Relabeling z -> 1-z negates every defined gap and preserves accuracy.
        #[test]
        fn group_flip_antisymmetry((y, y_hat, z, w) in instance()) {
            let flipped: Vec<u8> = z.iter().map(|&g| 1 - g).collect();
            let a = report_from_predictions(&y, &y_hat, &z, &w).unwrap();
            let b = report_from_predictions(&y, &y_hat, &flipped, &w).unwrap();
            if let (Some(ga), Some(gb)) = (a.fnr_gap, b.fnr_gap) {
                prop_assert!((ga + gb).abs() < 1e-12);
            }
            if let (Some(ga), Some(gb)) = (a.fpr_gap, b.fpr_gap) {
                prop_assert!((ga + gb).abs() < 1e-12);
            }
            prop_assert!((a.weighted_accuracy - b.weighted_accuracy).abs() < 1e-12);
        }

        // Metrics are invariant to row permutation and weight scaling.
        #[test]
        fn permutation_and_scale_invariance((y, y_hat, z, w) in instance(), scale in 0.1f64..10.0) {
            let n = y.len();
            let perm: Vec<usize> = (0..n).rev().collect();
            let re = |v: &Vec<u8>| -> Vec<u8> { perm.iter().map(|&i| v[i]).collect() };
            let scaled: Vec<f64> = perm.iter().map(|&i| w[i] * scale).collect();
            let a = report_from_predictions(&y, &y_hat, &z, &w).unwrap();
            let b = report_from_predictions(&re(&y), &re(&y_hat), &re(&z), &scaled).unwrap();
            prop_assert!((a.weighted_accuracy - b.weighted_accuracy).abs() < 1e-12);
            if let (Some(ga), Some(gb)) = (a.fnr_gap, b.fnr_gap) {
                prop_assert!((ga - gb).abs() < 1e-12);
            }
        }

        // FNR gap is zero exactly when group TPRs coincide.
        #[test]
        fn equality_of_opportunity_link((y, y_hat, z, w) in instance()) {
            let c = group_confusion(&y, &y_hat, &z, &w).unwrap();
            if let Ok(gap) = fnr_gap(&c) {
                let tpr: Vec<f64> = (0..2)
                    .map(|g| c.tp[g] / (c.tp[g] + c.fn_[g]))
                    .collect();
                prop_assert_eq!(gap.abs() < 1e-12, (tpr[0] - tpr[1]).abs() < 1e-12);
            }
        }
    }
}

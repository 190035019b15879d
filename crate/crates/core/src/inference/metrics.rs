//! Evaluation metrics: binary detection rates and localization error.

use alloc::collections::BTreeMap;
use alloc::string::String;

#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Binary detection performance. Ratios with a zero denominator are
/// reported as absent rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fpr: Option<f64>,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specificity: Option<f64>,
}

/// Tally sensitivity, false positive rate, accuracy and specificity
/// of binary decisions against ground truth (`true` = positive).
pub fn detection_metrics(decisions: &[bool], truth: &[bool]) -> Result<DetectionMetrics> {
    if decisions.len() != truth.len() {
        return Err(CoreError::dims(truth.len(), decisions.len(), "decisions"));
    }
    if decisions.is_empty() {
        return Err(CoreError::invalid("decisions", "empty"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&d, &t) in decisions.iter().zip(truth) {
        match (d, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Ok(DetectionMetrics {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        sensitivity: ratio(tp, tp + fn_),
        fpr: ratio(fp, fp + tn),
        accuracy: (tp + tn) as f64 / decisions.len() as f64,
        specificity: ratio(tn, tn + fp),
    })
}

/// Root mean square position error of cell-label decisions, in meters.
pub fn localization_rmse(
    estimates: &[String],
    truth: &[String],
    cell_positions: &BTreeMap<String, [f64; 2]>,
) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(CoreError::dims(truth.len(), estimates.len(), "estimates"));
    }
    if estimates.is_empty() {
        return Err(CoreError::invalid("estimates", "empty"));
    }
    let resolve = |label: &String| -> Result<[f64; 2]> {
        cell_positions
            .get(label)
            .copied()
            .ok_or_else(|| CoreError::UnknownLabel(label.clone()))
    };
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        let pe = resolve(e)?;
        let pt = resolve(t)?;
        let dx = pe[0] - pt[0];
        let dy = pe[1] - pt[1];
        total += dx * dx + dy * dy;
    }
    Ok((total / estimates.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_predictions() {
        let truth = vec![true, false, true, false];
        let m = detection_metrics(&truth, &truth).unwrap();
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.fpr, Some(0.0));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.specificity, Some(1.0));
    }

    #[test]
    fn all_positive_on_balanced_truth() {
        let truth = vec![true, true, false, false];
        let decisions = vec![true; 4];
        let m = detection_metrics(&decisions, &truth).unwrap();
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.specificity, Some(0.0));
        assert_eq!(m.fpr, Some(1.0));
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn undefined_ratios_are_absent() {
        // no negatives in truth: FPR and specificity undefined
        let truth = vec![true, true];
        let m = detection_metrics(&[true, false], &truth).unwrap();
        assert_eq!(m.fpr, None);
        assert_eq!(m.specificity, None);
        assert_eq!(m.sensitivity, Some(0.5));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(detection_metrics(&[true], &[true, false]).is_err());
    }

    fn grid() -> BTreeMap<String, [f64; 2]> {
        let mut g = BTreeMap::new();
        g.insert("c0".to_string(), [0.0, 0.0]);
        g.insert("c1".to_string(), [1.0, 0.0]);
        g.insert("c2".to_string(), [2.0, 0.0]);
        g
    }

    #[test]
    fn rmse_zero_when_exact() {
        let labels: Vec<String> = vec!["c0".into(), "c1".into(), "c2".into()];
        assert_eq!(localization_rmse(&labels, &labels, &grid()).unwrap(), 0.0);
    }

    #[test]
    fn rmse_one_when_always_one_cell_off() {
        let truth: Vec<String> = vec!["c0".into(), "c1".into()];
        let est: Vec<String> = vec!["c1".into(), "c2".into()];
        assert_abs_diff_eq!(
            localization_rmse(&est, &truth, &grid()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn unknown_label_is_an_error() {
        let truth: Vec<String> = vec!["c0".into()];
        let est: Vec<String> = vec!["nope".into()];
        assert!(matches!(
            localization_rmse(&est, &truth, &grid()),
            Err(CoreError::UnknownLabel(_))
        ));
    }
}

//! Cloud-side latent-process inference.
//!
//! Per-gateway similarity components `G^k(x_e)` (log domain) enter a
//! prior-weighted mixture; the posterior over the latent labels and its
//! argmax are evaluated with log-sum-exp throughout. Two component
//! families are provided: a diagonal-Gaussian log-likelihood on
//! reconstructed CQI (detection / localization) and a smoothed KNN
//! vote fraction (activity recognition).

mod knn;
mod metrics;

pub use knn::{cross_validate, CrossValidationReport, KnnClassifier, DEFAULT_NEIGHBORS};
pub use metrics::{detection_metrics, localization_rmse, DetectionMetrics};

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::cqi::SensingTask;
use crate::error::CoreError;
use crate::pca::PcaModel;
use crate::Result;

/// How per-gateway similarity components combine in the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayCombine {
    /// Sum of per-gateway likelihoods (as the mixture metric is written).
    #[default]
    Sum,
    /// Product of per-gateway likelihoods (independence reading).
    Product,
}

/// Log of the sum of exponentials, stable for large negative inputs.
/// Returns `-inf` when every input is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Feature vectors from every gateway serving one task at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub task_id: String,
    pub timestamp_ms: i64,
    pub gateways: Vec<GatewayFeatures>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayFeatures {
    pub gw_id: String,
    /// Concatenation of the per-device feature vectors of this gateway.
    pub features: Vec<f64>,
}

impl FeatureBatch {
    pub fn validate(&self) -> Result<()> {
        if self.gateways.is_empty() {
            return Err(CoreError::invalid("gateways", "need at least one gateway"));
        }
        for (i, g) in self.gateways.iter().enumerate() {
            if g.features.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::invalid("features", "non-finite entry"));
            }
            if self.gateways[..i].iter().any(|o| o.gw_id == g.gw_id) {
                return Err(CoreError::invalid("gateways", "duplicate gateway id"));
            }
        }
        Ok(())
    }

    pub fn gw_ids(&self) -> Vec<String> {
        self.gateways.iter().map(|g| g.gw_id.clone()).collect()
    }
}

/// Posterior over the latent labels with the argmax decision.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEstimate {
    pub task_id: String,
    pub gw_ids: Vec<String>,
    pub timestamp_ms: i64,
    /// `Pr(z = k | X)` per label, aligned with the task's label order.
    pub posteriors: Vec<f64>,
    /// Index of the most likely label (lowest index on ties).
    pub estimate: usize,
    /// The `G^k(x_e)` inputs, `K` rows by `E` columns.
    pub log_components: Vec<Vec<f64>>,
}

/// Diagonal-Gaussian log-likelihood of the CQI reconstructed from the
/// features, under class `label`'s statistics:
/// `G^k = -1/2 sum_v [ (s_v - mu_v)^2 / var_v + ln(2 pi var_v) ]`.
pub fn gaussian_component(model: &PcaModel, features: &[f64], label: &str) -> Result<f64> {
    let stats = model.stats_for(label)?;
    let s_hat = model.reconstruct(features)?;
    let mut acc = 0.0;
    for ((s, m), v) in s_hat.iter().zip(&stats.mean).zip(&stats.variance) {
        let d = s - m;
        acc += d * d / v + (2.0 * core::f64::consts::PI * v).ln();
    }
    Ok(-0.5 * acc)
}

/// Infer the latent value from per-(label, gateway) components.
///
/// `components[k][e]` is `G^k(x_e)` in the log domain. The posterior is
/// `alpha_k (+) over e of exp(G^k(x_e))`, normalized over labels, where
/// `(+)` is sum or product per the task's `gateway_combine`; everything
/// is evaluated with log-sum-exp.
pub fn infer(
    task: &SensingTask,
    batch: &FeatureBatch,
    components: &[Vec<f64>],
) -> Result<LatentEstimate> {
    batch.validate()?;
    let k_count = task.class_count();
    let e_count = batch.gateways.len();
    if components.len() != k_count {
        return Err(CoreError::dims(k_count, components.len(), "components rows"));
    }
    for row in components {
        if row.len() != e_count {
            return Err(CoreError::dims(e_count, row.len(), "components cols"));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(CoreError::invalid("components", "NaN component"));
        }
    }
    let mut log_weighted = Vec::with_capacity(k_count);
    for (row, &alpha) in components.iter().zip(&task.priors) {
        let evidence = match task.gateway_combine {
            GatewayCombine::Sum => log_sum_exp(row),
            GatewayCombine::Product => row.iter().sum(),
        };
        let log_alpha = if alpha > 0.0 { alpha.ln() } else { f64::NEG_INFINITY };
        log_weighted.push(log_alpha + evidence);
    }
    let norm = log_sum_exp(&log_weighted);
    if norm == f64::NEG_INFINITY {
        return Err(CoreError::NoEvidence);
    }
    let posteriors: Vec<f64> = log_weighted.iter().map(|l| (l - norm).exp()).collect();
    let mut estimate = 0usize;
    for (i, &p) in posteriors.iter().enumerate() {
        if p > posteriors[estimate] {
            estimate = i;
        }
    }
    Ok(LatentEstimate {
        task_id: task.task_id.clone(),
        gw_ids: batch.gw_ids(),
        timestamp_ms: batch.timestamp_ms,
        posteriors,
        estimate,
        log_components: components.to_vec(),
    })
}

/// Binary occupancy decision: label 0 is `empty`, label 1 is `occupied`.
pub fn detect_occupancy(
    task: &SensingTask,
    batch: &FeatureBatch,
    components: &[Vec<f64>],
) -> Result<(bool, LatentEstimate)> {
    if task.task_type != crate::cqi::TaskType::Detection || task.class_count() != 2 {
        return Err(CoreError::invalid(
            "task",
            "occupancy detection needs a binary detection task",
        ));
    }
    let estimate = infer(task, batch, components)?;
    Ok((estimate.estimate == 1, estimate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqi::{CqiType, FeatureRecipe, OtaProfile, TaskType};
    use crate::pca::{train_pca, ComponentSelection, TrainingSet};
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task(k: usize, priors: Vec<f64>) -> SensingTask {
        SensingTask {
            task_id: "t".into(),
            task_type: if k == 2 { TaskType::Detection } else { TaskType::Localization },
            latent_labels: (0..k).map(|i| alloc::format!("k{i}")).collect(),
            priors,
            feature_recipe: FeatureRecipe::Pca,
            num_components: Some(1),
            eigenvalue_threshold: None,
            window_ms: 600,
            hop_ms: None,
            cqi_type: CqiType::Up,
            ota_profile: OtaProfile {
                neighborhood_links: vec![0],
                carrier_frequency_hz: 2.4e9,
                bandwidth_hz: 2e6,
                subcarriers: 1,
                duty_cycle_ms: 60,
                cqi_type: CqiType::Up,
                cqi_sampling_ms: 60,
            },
            gateway_combine: GatewayCombine::Sum,
        }
    }

    fn batch(e: usize) -> FeatureBatch {
        FeatureBatch {
            task_id: "t".into(),
            timestamp_ms: 0,
            gateways: (0..e)
                .map(|i| GatewayFeatures {
                    gw_id: alloc::format!("gw{i}"),
                    features: vec![0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn uniform_components_give_uniform_posterior() {
        let t = task(3, vec![1.0 / 3.0; 3]);
        let components = vec![vec![-1.0, -2.0]; 3];
        let est = infer(&t, &batch(2), &components).unwrap();
        for &p in &est.posteriors {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_eq!(est.estimate, 0, "ties resolve to the lowest index");
    }

    #[test]
    fn two_class_arithmetic() {
        let t = task(2, vec![0.5, 0.5]);
        let est = infer(&t, &batch(1), &[vec![0.0], vec![3.0f64.ln()]]).unwrap();
        assert_abs_diff_eq!(est.posteriors[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(est.posteriors[1], 0.75, epsilon = 1e-12);
        assert_eq!(est.estimate, 1);
    }

    /// Naive direct-exponentiation evaluation of the posterior.
    fn naive_posterior(priors: &[f64], components: &[Vec<f64>]) -> Vec<f64> {
        let weighted: Vec<f64> = priors
            .iter()
            .zip(components)
            .map(|(&a, row)| a * row.iter().map(|g| g.exp()).sum::<f64>())
            .collect();
        let z: f64 = weighted.iter().sum();
        weighted.iter().map(|w| w / z).collect()
    }

    #[test]
    fn matches_naive_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let k = rng.random_range(2..=4);
            let e = rng.random_range(1..=3);
            let mut priors: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = priors.iter().sum();
            for p in priors.iter_mut() {
                *p /= s;
            }
            let components: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..e).map(|_| rng.random_range(-20.0..20.0)).collect())
                .collect();
            let t = task(k, priors.clone());
            let est = infer(&t, &batch(e), &components).unwrap();
            let oracle = naive_posterior(&priors, &components);
            for (a, b) in est.posteriors.iter().zip(&oracle) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            assert_abs_diff_eq!(est.posteriors.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn argmax_invariant_under_common_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let components: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..2).map(|_| rng.random_range(-10.0..10.0)).collect())
                .collect();
            let shift = rng.random_range(-500.0..500.0);
            let shifted: Vec<Vec<f64>> = components
                .iter()
                .map(|row| row.iter().map(|g| g + shift).collect())
                .collect();
            let t = task(3, vec![0.2, 0.5, 0.3]);
            let a = infer(&t, &batch(2), &components).unwrap();
            let b = infer(&t, &batch(2), &shifted).unwrap();
            assert_eq!(a.estimate, b.estimate);
            for (x, y) in a.posteriors.iter().zip(&b.posteriors) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn prior_monotonicity() {
        let components = vec![vec![-1.0], vec![-1.5], vec![-0.5]];
        let mut last = 0.0;
        for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let rest = (1.0 - alpha) / 2.0;
            let t = task(3, vec![alpha, rest, rest]);
            let est = infer(&t, &batch(1), &components).unwrap();
            assert!(est.posteriors[0] >= last);
            last = est.posteriors[0];
        }
    }

    #[test]
    fn total_underflow_is_an_error_not_nan() {
        let t = task(2, vec![0.5, 0.5]);
        let err = infer(
            &t,
            &batch(1),
            &[vec![f64::NEG_INFINITY], vec![f64::NEG_INFINITY]],
        );
        assert!(matches!(err, Err(CoreError::NoEvidence)));
    }

    #[test]
    fn swapped_priors_flip_ambiguous_decision() {
        let components = vec![vec![-2.0], vec![-2.0]];
        let mut t = task(2, vec![0.99, 0.01]);
        t.task_type = TaskType::Detection;
        let (occupied, _) = detect_occupancy(&t, &batch(1), &components).unwrap();
        assert!(!occupied);
        t.priors = vec![0.01, 0.99];
        let (occupied, _) = detect_occupancy(&t, &batch(1), &components).unwrap();
        assert!(occupied);
    }

    #[test]
    fn product_combine_sums_logs() {
        let mut t = task(2, vec![0.5, 0.5]);
        t.gateway_combine = GatewayCombine::Product;
        let est = infer(&t, &batch(2), &[vec![-1.0, -1.0], vec![-2.0, -2.0]]).unwrap();
        // product mode: log evidence -2 vs -4 -> ratio exp(2)
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(est.posteriors[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_component_closed_forms() {
        // build a 1-D model with mu = 0, var = 1 via class stats
        let mut classes = BTreeMap::new();
        classes.insert("a".to_string(), vec![vec![-1.0], vec![1.0]]);
        let training = TrainingSet {
            task_id: "t".into(),
            layout: crate::cqi::Layout { freq_count: 1, link_count: 1, time_count: 1 },
            classes,
        };
        let model = train_pca(&training, &[1.0], ComponentSelection::Fixed(1)).unwrap();
        // reconstruction is identity (P = V = 1); class stats mu=0 var=1
        let g_at_mean = gaussian_component(&model, &[0.0], "a").unwrap();
        assert_abs_diff_eq!(
            g_at_mean,
            -0.5 * (2.0 * core::f64::consts::PI).ln(),
            epsilon = 1e-12
        );
        let g_at_one = gaussian_component(&model, &[1.0], "a").unwrap();
        assert_abs_diff_eq!(g_at_one, -1.4189385332046727, epsilon = 1e-12);
        assert!(g_at_mean > g_at_one);
        assert!(gaussian_component(&model, &[0.0], "missing").is_err());
    }

    #[test]
    fn gaussian_component_matches_density_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut classes = BTreeMap::new();
        for label in ["a", "b"] {
            let examples: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            classes.insert(label.to_string(), examples);
        }
        let training = TrainingSet {
            task_id: "t".into(),
            layout: crate::cqi::Layout { freq_count: 1, link_count: 4, time_count: 1 },
            classes,
        };
        let model = train_pca(&training, &[0.5, 0.5], ComponentSelection::Fixed(4)).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = gaussian_component(&model, &x, "a").unwrap();
            // independent oracle: product of scalar normal densities, then log
            let s_hat = model.reconstruct(&x).unwrap();
            let stats = model.stats_for("a").unwrap();
            let mut density = 1.0f64;
            for i in 0..4 {
                let var = stats.variance[i];
                let d = s_hat[i] - stats.mean[i];
                density *= (-d * d / (2.0 * var)).exp()
                    / (2.0 * core::f64::consts::PI * var).sqrt();
            }
            assert_abs_diff_eq!(g, density.ln(), epsilon = 1e-10);
        }
    }
}

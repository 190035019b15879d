//! Subspace feature extraction over CQI vectors.
//!
//! The model is trained on per-class ground-truth examples: their
//! class-prior-weighted pooled covariance is eigendecomposed and the
//! top components form the projection subspace. Per-class statistics
//! of the reconstructed training examples parameterize the
//! log-likelihood used for detection and localization.

mod jacobi;
mod matrix;

pub use jacobi::{sym_eigen, JACOBI_MAX_SWEEPS, JACOBI_TOL};
pub use matrix::Matrix;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cqi::{CqiSeries, Layout};
use crate::error::CoreError;
use crate::Result;

/// Relative floor applied to per-class reconstructed variances so
/// degenerate classes keep finite log-likelihoods.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-6;

/// Ground-truth example vectors per latent label.
///
/// Vectors are real-valued; complex CQI is stacked into `2 * F * L`
/// entries upstream (see `CqiSeries::snapshot_vector`). Class order —
/// and therefore the prior order every consumer must use — is the
/// sorted label order given by [`labels`](Self::labels).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingSet {
    pub task_id: String,
    pub layout: Layout,
    pub classes: BTreeMap<String, Vec<Vec<f64>>>,
}

impl TrainingSet {
    pub fn labels(&self) -> Vec<String> {
        self.classes.keys().cloned().collect()
    }

    /// Dimension V shared by every example.
    pub fn dim(&self) -> Result<usize> {
        let first = self
            .classes
            .values()
            .flat_map(|v| v.iter())
            .next()
            .ok_or_else(|| CoreError::invalid("training set", "no examples"))?;
        Ok(first.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(CoreError::invalid("training set", "no classes"));
        }
        let dim = self.dim()?;
        if dim == 0 {
            return Err(CoreError::invalid("training set", "zero-dimensional examples"));
        }
        for (label, examples) in &self.classes {
            if examples.is_empty() {
                return Err(CoreError::BadClass(label.clone(), "no examples".into()));
            }
            for e in examples {
                if e.len() != dim {
                    return Err(CoreError::dims(dim, e.len(), "training example"));
                }
                if e.iter().any(|x| !x.is_finite()) {
                    return Err(CoreError::BadClass(label.clone(), "non-finite example".into()));
                }
            }
        }
        Ok(())
    }

    pub fn example_count(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentSelection {
    /// Keep every component whose eigenvalue is `>= h` (at least one).
    Threshold(f64),
    /// Keep exactly `P` components.
    Fixed(usize),
}

/// Per-class statistics of the reconstructed training examples: the
/// parameters of the diagonal-Gaussian log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub label: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Trained subspace model for one sensing task.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub task_id: String,
    /// Input dimension V.
    pub dim: usize,
    /// Selected component count P.
    pub components: usize,
    /// Eigenvalue threshold used for selection, when threshold-based.
    pub threshold_used: Option<f64>,
    /// Set when the threshold exceeded every eigenvalue and selection
    /// fell back to a single component.
    pub threshold_fallback: bool,
    /// Prior-weighted global mean subtracted before projection.
    pub mean: Vec<f64>,
    /// V x P matrix with orthonormal columns.
    pub subspace: Matrix,
    /// Eigenvalues of the selected components, descending.
    pub eigenvalues: Vec<f64>,
    /// Full eigenvalue spectrum (all V), descending.
    pub spectrum: Vec<f64>,
    /// Marginalized covariance, retained for audit after training.
    /// Absent on models restored from persisted files.
    pub covariance: Option<Matrix>,
    pub class_stats: Vec<ClassStats>,
}

/// Train the subspace model from per-class ground truth.
///
/// `priors` aligns with `training.labels()` (sorted class labels) and
/// must sum to one. The covariance pools per-class sample covariances
/// about the prior-weighted global mean, weighted by the priors.
pub fn train_pca(
    training: &TrainingSet,
    priors: &[f64],
    selection: ComponentSelection,
) -> Result<PcaModel> {
    training.validate()?;
    let labels = training.labels();
    if priors.len() != labels.len() {
        return Err(CoreError::dims(labels.len(), priors.len(), "priors"));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || priors.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(CoreError::invalid("priors", "must lie in [0,1] and sum to 1"));
    }
    let dim = training.dim()?;

    // prior-weighted global mean
    let mut mean = alloc::vec![0.0f64; dim];
    for (label, &alpha) in labels.iter().zip(priors) {
        let examples = &training.classes[label];
        let inv = alpha / examples.len() as f64;
        for e in examples {
            for (m, &x) in mean.iter_mut().zip(e) {
                *m += inv * x;
            }
        }
    }

    // marginalized covariance about the global mean
    let mut cov = Matrix::zeros(dim, dim);
    for (label, &alpha) in labels.iter().zip(priors) {
        let examples = &training.classes[label];
        let w = alpha / examples.len() as f64;
        for e in examples {
            let centered: Vec<f64> = e.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..dim {
                let ci = w * centered[i];
                for j in i..dim {
                    let v = cov.get(i, j) + ci * centered[j];
                    cov.set(i, j, v);
                }
            }
        }
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            cov.set(j, i, cov.get(i, j));
        }
    }

    let (spectrum, vectors) = sym_eigen(&cov)?;

    let (components, threshold_used, threshold_fallback) = match selection {
        ComponentSelection::Fixed(p) => {
            if p < 1 || p > dim {
                return Err(CoreError::invalid("num_components", "must be in [1, V]"));
            }
            (p, None, false)
        }
        ComponentSelection::Threshold(h) => {
            let p = spectrum.iter().filter(|&&l| l >= h).count();
            if p == 0 {
                (1, Some(h), true)
            } else {
                (p, Some(h), false)
            }
        }
    };

    let subspace = vectors.truncate_cols(components);
    let eigenvalues = spectrum[..components].to_vec();

    // class statistics of reconstructed examples
    let trace: f64 = (0..dim).map(|i| cov.get(i, i)).sum();
    let floor = VARIANCE_FLOOR_RATIO * trace / dim as f64;
    let mut class_stats = Vec::with_capacity(labels.len());
    for label in &labels {
        let examples = &training.classes[label];
        let n = examples.len() as f64;
        let mut mu = alloc::vec![0.0f64; dim];
        let mut m2 = alloc::vec![0.0f64; dim];
        let mut recon = Vec::with_capacity(examples.len());
        for e in examples {
            let x = project_about(&subspace, &mean, e);
            let r = reconstruct_about(&subspace, &mean, &x);
            recon.push(r);
        }
        for r in &recon {
            for (m, &x) in mu.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        for r in &recon {
            for ((v, &x), &m) in m2.iter_mut().zip(r).zip(&mu) {
                *v += (x - m) * (x - m) / n;
            }
        }
        for v in m2.iter_mut() {
            if *v < floor {
                *v = floor;
            }
        }
        class_stats.push(ClassStats {
            label: label.clone(),
            mean: mu,
            variance: m2,
        });
    }

    Ok(PcaModel {
        task_id: training.task_id.clone(),
        dim,
        components,
        threshold_used,
        threshold_fallback,
        mean,
        subspace,
        eigenvalues,
        spectrum,
        covariance: Some(cov),
        class_stats,
    })
}

fn project_about(subspace: &Matrix, mean: &[f64], s: &[f64]) -> Vec<f64> {
    let p = subspace.cols();
    let mut x = alloc::vec![0.0f64; p];
    for v in 0..subspace.rows() {
        let centered = s[v] - mean[v];
        let row = subspace.row(v);
        for (j, xr) in x.iter_mut().enumerate() {
            *xr += row[j] * centered;
        }
    }
    x
}

fn reconstruct_about(subspace: &Matrix, mean: &[f64], x: &[f64]) -> Vec<f64> {
    let mut s = mean.to_vec();
    for v in 0..subspace.rows() {
        let row = subspace.row(v);
        let mut acc = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            acc += row[j] * xj;
        }
        s[v] += acc;
    }
    s
}

impl PcaModel {
    /// Project a centered CQI vector onto the subspace: `x = U_P^T (s - mean)`.
    pub fn project(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.dim {
            return Err(CoreError::dims(self.dim, s.len(), "project input"));
        }
        Ok(project_about(&self.subspace, &self.mean, s))
    }

    /// Reconstruct a CQI vector from features: `s_hat = U_P x + mean`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.components {
            return Err(CoreError::dims(self.components, x.len(), "reconstruct input"));
        }
        Ok(reconstruct_about(&self.subspace, &self.mean, x))
    }

    /// Fraction of total variance captured by each component, over the
    /// full spectrum, descending.
    pub fn explained_variance(&self) -> Vec<f64> {
        let total: f64 = self.spectrum.iter().sum();
        if total <= 0.0 {
            return alloc::vec![0.0; self.spectrum.len()];
        }
        self.spectrum.iter().map(|l| l / total).collect()
    }

    /// Project the time-averaged snapshot of a series.
    pub fn project_series(&self, series: &CqiSeries) -> Result<Vec<f64>> {
        self.project(&series.snapshot_vector()?)
    }

    /// Time series of one component's projection: for every timestamp,
    /// the per-time snapshot is centered and projected onto column
    /// `component`. Used for peak analysis of segmented activity.
    pub fn component_series(&self, series: &CqiSeries, component: usize) -> Result<Vec<(i64, f64)>> {
        if component >= self.components {
            return Err(CoreError::invalid("component", "outside selected subspace"));
        }
        let layout = series.layout();
        let streams = layout.stream_count();
        let expected = if series.cqi_type.is_complex() { 2 * streams } else { streams };
        if expected != self.dim {
            return Err(CoreError::dims(self.dim, expected, "component_series input"));
        }
        let link_pos: BTreeMap<u32, usize> = series
            .link_ids
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        let times = series.times();
        let time_pos: BTreeMap<i64, usize> =
            times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut re = alloc::vec![alloc::vec![f64::NAN; streams]; times.len()];
        let mut im = alloc::vec![alloc::vec![0.0f64; streams]; times.len()];
        for s in series.samples() {
            let v = layout.stream_index(usize::from(s.freq_index), link_pos[&s.link_id]);
            let ti = time_pos[&s.time_ms];
            re[ti][v] = s.value.re;
            im[ti][v] = s.value.im;
        }
        let u = self.subspace.col(component);
        let mut out = Vec::with_capacity(times.len());
        for (ti, &t) in times.iter().enumerate() {
            if re[ti].iter().any(|x| x.is_nan()) {
                return Err(CoreError::invalid(
                    "samples",
                    "incomplete snapshot grid for component projection",
                ));
            }
            let mut acc = 0.0;
            for v in 0..streams {
                acc += (re[ti][v] - self.mean[v]) * u[v];
            }
            if series.cqi_type.is_complex() {
                for v in 0..streams {
                    acc += (im[ti][v] - self.mean[streams + v]) * u[streams + v];
                }
            }
            out.push((t, acc));
        }
        Ok(out)
    }

    pub fn stats_for(&self, label: &str) -> Result<&ClassStats> {
        self.class_stats
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| CoreError::UnknownLabel(label.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_class(examples: Vec<Vec<f64>>) -> TrainingSet {
        let mut classes = BTreeMap::new();
        classes.insert("only".to_string(), examples);
        TrainingSet {
            task_id: "t".into(),
            layout: Layout { freq_count: 1, link_count: 2, time_count: 1 },
            classes,
        }
    }

    #[test]
    fn rank_one_covariance() {
        let t = single_class(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(2)).unwrap();
        assert_abs_diff_eq!(model.spectrum[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.spectrum[1], 0.0, epsilon = 1e-12);
        // sign convention makes the top eigenvector +e1
        assert_abs_diff_eq!(model.subspace.get(0, 0), 1.0, epsilon = 1e-12);
        let ev = model.explained_variance();
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_covariance_splits_variance_evenly() {
        let a = 2.0;
        let t = single_class(vec![
            vec![a, 0.0],
            vec![-a, 0.0],
            vec![0.0, a],
            vec![0.0, -a],
        ]);
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(2)).unwrap();
        let ev = model.explained_variance();
        assert_abs_diff_eq!(ev[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1], 0.5, epsilon = 1e-12);
    }

    /// Independent pooled-covariance oracle: direct weighted average of
    /// per-class scatter about the weighted global mean.
    fn naive_marginalized_covariance(t: &TrainingSet, priors: &[f64]) -> Vec<Vec<f64>> {
        let labels = t.labels();
        let dim = t.dim().unwrap();
        let mut mean = vec![0.0; dim];
        for (label, &a) in labels.iter().zip(priors) {
            let ex = &t.classes[label];
            for e in ex {
                for i in 0..dim {
                    mean[i] += a * e[i] / ex.len() as f64;
                }
            }
        }
        let mut c = vec![vec![0.0; dim]; dim];
        for (label, &a) in labels.iter().zip(priors) {
            let ex = &t.classes[label];
            for e in ex {
                for i in 0..dim {
                    for j in 0..dim {
                        c[i][j] += a * (e[i] - mean[i]) * (e[j] - mean[j]) / ex.len() as f64;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn covariance_matches_naive_pooled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 5;
        let mut classes = BTreeMap::new();
        for (ci, label) in ["a", "b", "c"].iter().enumerate() {
            let center = ci as f64 * 2.0;
            let examples: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..dim).map(|_| center + rng.random_range(-1.0..1.0)).collect())
                .collect();
            classes.insert(label.to_string(), examples);
        }
        let t = TrainingSet {
            task_id: "t".into(),
            layout: Layout { freq_count: 1, link_count: dim, time_count: 1 },
            classes,
        };
        let priors = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let model = train_pca(&t, &priors, ComponentSelection::Fixed(2)).unwrap();
        let oracle = naive_marginalized_covariance(&t, &priors);
        let cov = model.covariance.as_ref().unwrap();
        for i in 0..dim {
            for j in 0..dim {
                assert_abs_diff_eq!(cov.get(i, j), oracle[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = single_class(
            (0..20)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(3)).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                let dot: f64 = (0..6)
                    .map(|i| model.subspace.get(i, p) * model.subspace.get(i, q))
                    .sum();
                let expect = if p == q { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn projection_centers_and_aligns() {
        let t = single_class(vec![vec![1.0, 0.0, 2.0], vec![-1.0, 0.0, 2.0]]);
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(2)).unwrap();
        // s = mean -> zero features
        let x = model.project(&model.mean.clone()).unwrap();
        assert!(x.iter().all(|&v| v.abs() < 1e-12));
        // s = mean + u1 -> e1
        let u1 = model.subspace.col(0);
        let s: Vec<f64> = model.mean.iter().zip(&u1).map(|(m, u)| m + u).collect();
        let x = model.project(&s).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = single_class(
            (0..12)
                .map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        );
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(3)).unwrap();
        let s: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = model.project(&s).unwrap();
        for p in 0..3 {
            let mut naive = 0.0;
            for v in 0..8 {
                naive += model.subspace.get(v, p) * (s[v] - model.mean[v]);
            }
            assert_abs_diff_eq!(x[p], naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_is_a_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = single_class(
            (0..10)
                .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(2)).unwrap();
        assert_eq!(model.reconstruct(&vec![0.0, 0.0]).unwrap(), model.mean);
        for _ in 0..20 {
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r = model.reconstruct(&model.project(&s).unwrap()).unwrap();
            let err: f64 = r.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum();
            let norm: f64 = s
                .iter()
                .zip(&model.mean)
                .map(|(a, m)| (a - m) * (a - m))
                .sum();
            assert!(err <= norm + 1e-12);
        }
    }

    #[test]
    fn full_rank_reconstruction_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = single_class(
            (0..10)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(4)).unwrap();
        for _ in 0..10 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r = model.reconstruct(&model.project(&s).unwrap()).unwrap();
            for (a, b) in r.iter().zip(&s) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn threshold_selection_includes_ties_and_falls_back() {
        let t = single_class(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        // spectrum is [1, 0]; threshold exactly 1 keeps the tied component
        let m = train_pca(&t, &[1.0], ComponentSelection::Threshold(1.0)).unwrap();
        assert_eq!(m.components, 1);
        assert!(!m.threshold_fallback);
        // threshold above the max falls back to one component with a flag
        let m = train_pca(&t, &[1.0], ComponentSelection::Threshold(10.0)).unwrap();
        assert_eq!(m.components, 1);
        assert!(m.threshold_fallback);
    }

    #[test]
    fn empty_class_is_rejected() {
        let mut classes = BTreeMap::new();
        classes.insert("a".to_string(), vec![vec![1.0]]);
        classes.insert("b".to_string(), Vec::new());
        let t = TrainingSet {
            task_id: "t".into(),
            layout: Layout { freq_count: 1, link_count: 1, time_count: 1 },
            classes,
        };
        assert!(matches!(
            train_pca(&t, &[0.5, 0.5], ComponentSelection::Fixed(1)),
            Err(CoreError::BadClass(label, _)) if label == "b"
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = single_class(
            (0..15)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        let a = train_pca(&t, &[1.0], ComponentSelection::Threshold(0.01)).unwrap();
        let b = train_pca(&t, &[1.0], ComponentSelection::Threshold(0.01)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.subspace.data(), b.subspace.data());
    }

    /// Gram-Schmidt orthonormalization of random columns.
    fn random_orthonormal(rng: &mut ChaCha8Rng, dim: usize, p: usize) -> Vec<Vec<f64>> {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < p {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= dot * y;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for x in v.iter_mut() {
                    *x /= norm;
                }
                cols.push(v);
            }
        }
        cols
    }

    #[test]
    fn subspace_beats_random_subspaces_on_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let examples: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let a = rng.random_range(-3.0f64..3.0);
                let b = rng.random_range(-0.5f64..0.5);
                // anisotropic cloud in 8 dims
                (0..8)
                    .map(|i| if i % 2 == 0 { a * (i + 1) as f64 } else { b })
                    .map(|v| v + rng.random_range(-0.05..0.05))
                    .collect()
            })
            .collect();
        let t = single_class(examples.clone());
        let p = 3;
        let model = train_pca(&t, &[1.0], ComponentSelection::Fixed(p)).unwrap();
        let mse = |basis: &[Vec<f64>]| -> f64 {
            let mut total = 0.0;
            for e in &examples {
                let centered: Vec<f64> =
                    e.iter().zip(&model.mean).map(|(x, m)| x - m).collect();
                let mut recon = vec![0.0; 8];
                for col in basis {
                    let dot: f64 = centered.iter().zip(col).map(|(a, b)| a * b).sum();
                    for (r, c) in recon.iter_mut().zip(col) {
                        *r += dot * c;
                    }
                }
                total += centered
                    .iter()
                    .zip(&recon)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            total / examples.len() as f64
        };
        let model_basis: Vec<Vec<f64>> = (0..p).map(|j| model.subspace.col(j)).collect();
        let model_mse = mse(&model_basis);
        for _ in 0..100 {
            let random = random_orthonormal(&mut rng, 8, p);
            assert!(model_mse <= mse(&random) + 1e-9);
        }
    }
}

//! K-nearest-neighbor similarity for activity features, plus the
//! stratified cross-validation harness used to evaluate it.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::Result;

/// Neighbor count used by the activity recognizer.
pub const DEFAULT_NEIGHBORS: usize = 6;

/// Laplace-style smoothing so the log vote fraction stays finite.
const VOTE_EPSILON: f64 = 1e-9;

/// A KNN classifier over min/max-normalized features with Euclidean
/// distance.
///
/// Normalization bounds come from the training set only; query values
/// are clipped to `[-0.5, 1.5]` after scaling so far-out queries cannot
/// dominate. Distance ties resolve in training insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier {
    k: usize,
    class_labels: Vec<String>,
    points: Vec<Vec<f64>>,
    point_classes: Vec<usize>,
    mins: Vec<f64>,
    ranges: Vec<f64>,
}

impl KnnClassifier {
    /// Fit from raw feature vectors and their labels.
    pub fn fit(k: usize, features: &[Vec<f64>], labels: &[String]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(CoreError::dims(features.len(), labels.len(), "labels"));
        }
        if features.is_empty() {
            return Err(CoreError::invalid("training", "empty"));
        }
        if k < 1 || k > features.len() {
            return Err(CoreError::invalid("k", "must satisfy 1 <= k <= n"));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(CoreError::invalid("features", "zero-dimensional"));
        }
        for f in features {
            if f.len() != dim {
                return Err(CoreError::dims(dim, f.len(), "feature vector"));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::invalid("features", "non-finite entry"));
            }
        }
        let mut class_labels: Vec<String> = labels.to_vec();
        class_labels.sort();
        class_labels.dedup();
        let point_classes: Vec<usize> = labels
            .iter()
            .map(|l| class_labels.iter().position(|c| c == l).expect("present"))
            .collect();
        let mut mins = alloc::vec![f64::INFINITY; dim];
        let mut maxs = alloc::vec![f64::NEG_INFINITY; dim];
        for f in features {
            for i in 0..dim {
                mins[i] = mins[i].min(f[i]);
                maxs[i] = maxs[i].max(f[i]);
            }
        }
        let ranges: Vec<f64> = mins
            .iter()
            .zip(&maxs)
            .map(|(lo, hi)| if hi > lo { hi - lo } else { 0.0 })
            .collect();
        let scale = |f: &Vec<f64>| -> Vec<f64> {
            f.iter()
                .enumerate()
                .map(|(i, &v)| {
                    if ranges[i] > 0.0 {
                        (v - mins[i]) / ranges[i]
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let points: Vec<Vec<f64>> = features.iter().map(scale).collect();
        Ok(KnnClassifier {
            k,
            class_labels,
            points,
            point_classes,
            mins,
            ranges,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn normalize_query(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mins.len() {
            return Err(CoreError::dims(self.mins.len(), x.len(), "query"));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let scaled = if self.ranges[i] > 0.0 {
                    (v - self.mins[i]) / self.ranges[i]
                } else {
                    0.0
                };
                scaled.clamp(-0.5, 1.5)
            })
            .collect())
    }

    /// Indices of the k nearest training points, nearest first;
    /// equal distances keep training insertion order.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        let q = self.normalize_query(x)?;
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        let dist2 = |i: usize| -> f64 {
            self.points[i]
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        order.sort_by(|&a, &b| dist2(a).partial_cmp(&dist2(b)).expect("finite"));
        order.truncate(self.k);
        Ok(order)
    }

    /// Smoothed log vote fraction for `label` among the k nearest
    /// neighbors: `ln((n_k + eps) / (k + C * eps))`.
    pub fn knn_component(&self, x: &[f64], label: &str) -> Result<f64> {
        let class = self
            .class_labels
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| CoreError::UnknownLabel(label.into()))?;
        let votes = self
            .neighbors(x)?
            .iter()
            .filter(|&&i| self.point_classes[i] == class)
            .count();
        let c = self.class_labels.len() as f64;
        Ok(((votes as f64 + VOTE_EPSILON) / (self.k as f64 + c * VOTE_EPSILON)).ln())
    }

    /// Majority vote among the k nearest neighbors; ties resolve to the
    /// lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let mut votes = alloc::vec![0usize; self.class_labels.len()];
        for i in self.neighbors(x)? {
            votes[self.point_classes[i]] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Aggregated result of a stratified k-fold cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidationReport {
    pub class_labels: Vec<String>,
    /// Rows are truth, columns are predictions.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub folds: usize,
}

/// Stratified k-fold cross-validation of a KNN classifier.
///
/// Examples are shuffled per class with a seeded generator, dealt
/// round-robin into folds, and each fold is tested against a
/// classifier fit on the remaining folds (normalization included).
pub fn cross_validate(
    k: usize,
    features: &[Vec<f64>],
    labels: &[String],
    folds: usize,
    seed: u64,
) -> Result<CrossValidationReport> {
    if folds < 2 {
        return Err(CoreError::invalid("folds", "must be >= 2"));
    }
    if features.len() != labels.len() || features.is_empty() {
        return Err(CoreError::invalid("dataset", "empty or mismatched"));
    }
    let mut class_labels: Vec<String> = labels.to_vec();
    class_labels.sort();
    class_labels.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = alloc::vec![0usize; features.len()];
    for class in &class_labels {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == class).collect();
        if idx.len() < folds {
            return Err(CoreError::BadClass(
                class.clone(),
                alloc::format!("{} examples, need >= {folds}", idx.len()),
            ));
        }
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }

    let class_index = |l: &String| class_labels.iter().position(|c| c == l).expect("present");
    let mut confusion = alloc::vec![alloc::vec![0usize; class_labels.len()]; class_labels.len()];
    for fold in 0..folds {
        let mut train_x: Vec<Vec<f64>> = Vec::new();
        let mut train_y: Vec<String> = Vec::new();
        let mut test: Vec<usize> = Vec::new();
        for i in 0..features.len() {
            if fold_of[i] == fold {
                test.push(i);
            } else {
                train_x.push(features[i].clone());
                train_y.push(labels[i].clone());
            }
        }
        let clf = KnnClassifier::fit(k, &train_x, &train_y)?;
        for i in test {
            let pred = clf.predict(&features[i])?;
            // classifier class order equals ours: both are sorted labels
            confusion[class_index(&labels[i])][pred] += 1;
        }
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..class_labels.len()).map(|i| confusion[i][i]).sum();
    Ok(CrossValidationReport {
        class_labels,
        confusion,
        accuracy: correct as f64 / total as f64,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::Rng;

    fn blob(rng: &mut ChaCha8Rng, center: &[f64], spread: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|&c| c + rng.random_range(-spread..spread))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn unanimous_vote_components() {
        let features = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![10.0, 10.0],
        ];
        let labels: Vec<String> =
            ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let clf = KnnClassifier::fit(3, &features, &labels).unwrap();
        let g_a = clf.knn_component(&[0.05, 0.05], "a").unwrap();
        let g_b = clf.knn_component(&[0.05, 0.05], "b").unwrap();
        assert!(g_a.abs() < 1e-6, "unanimous vote is ~log 1");
        assert!(g_b < -15.0, "zero votes collapse to ~log eps");
    }

    #[test]
    fn training_point_is_its_own_nearest_neighbor() {
        let features = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let labels: Vec<String> =
            ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let clf = KnnClassifier::fit(1, &features, &labels).unwrap();
        assert_eq!(clf.neighbors(&[3.0, 4.0]).unwrap(), vec![1]);
        assert_eq!(clf.predict(&[3.0, 4.0]).unwrap(), 1);
        let own = clf.knn_component(&[3.0, 4.0], "b").unwrap();
        let other = clf.knn_component(&[3.0, 4.0], "a").unwrap();
        assert!(own > other);
    }

    #[test]
    fn neighbors_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let n = rng.random_range(10..120);
            let dim = rng.random_range(2..6);
            let features: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let labels: Vec<String> = (0..n).map(|i| alloc::format!("c{}", i % 3)).collect();
            let k = rng.random_range(1..=6.min(n));
            let clf = KnnClassifier::fit(k, &features, &labels).unwrap();
            let query: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let got = clf.neighbors(&query).unwrap();
            // brute force on the same normalization
            let mins: Vec<f64> = (0..dim)
                .map(|d| features.iter().map(|f| f[d]).fold(f64::INFINITY, f64::min))
                .collect();
            let maxs: Vec<f64> = (0..dim)
                .map(|d| features.iter().map(|f| f[d]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let norm = |f: &[f64], clip: bool| -> Vec<f64> {
                (0..dim)
                    .map(|d| {
                        let r = maxs[d] - mins[d];
                        let v = if r > 0.0 { (f[d] - mins[d]) / r } else { 0.0 };
                        if clip {
                            v.clamp(-0.5, 1.5)
                        } else {
                            v
                        }
                    })
                    .collect()
            };
            let q = norm(&query, true);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let da: f64 = norm(&features[a], false)
                    .iter()
                    .zip(&q)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                let db: f64 = norm(&features[b], false)
                    .iter()
                    .zip(&q)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                da.partial_cmp(&db).unwrap()
            });
            order.truncate(k);
            assert_eq!(got, order);
        }
    }

    #[test]
    fn rescaling_one_dimension_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let features: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let labels: Vec<String> = (0..40).map(|i| alloc::format!("c{}", i % 2)).collect();
        let clf = KnnClassifier::fit(5, &features, &labels).unwrap();
        let scaled: Vec<Vec<f64>> = features
            .iter()
            .map(|f| vec![f[0] * 37.0 + 4.0, f[1]])
            .collect();
        let clf_scaled = KnnClassifier::fit(5, &scaled, &labels).unwrap();
        for _ in 0..20 {
            let q = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let q_scaled = vec![q[0] * 37.0 + 4.0, q[1]];
            assert_eq!(
                clf.neighbors(&q).unwrap(),
                clf_scaled.neighbors(&q_scaled).unwrap()
            );
        }
    }

    #[test]
    fn separable_blobs_cross_validate_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (label, center) in [("a", [0.0, 0.0]), ("b", [50.0, 0.0]), ("c", [0.0, 50.0])] {
            for f in blob(&mut rng, &center, 1.0, 30) {
                features.push(f);
                labels.push(label.to_string());
            }
        }
        let report = cross_validate(6, &features, &labels, 10, 42).unwrap();
        assert_eq!(report.accuracy, 1.0);
        for (i, row) in report.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c, if i == j { 30 } else { 0 });
            }
        }
    }

    #[test]
    fn identical_features_score_chance_level() {
        let features = vec![vec![1.0, 1.0]; 90];
        let labels: Vec<String> = (0..90).map(|i| alloc::format!("c{}", i % 3)).collect();
        let report = cross_validate(6, &features, &labels, 10, 42).unwrap();
        assert!(
            (0.2..=0.47).contains(&report.accuracy),
            "chance-level accuracy expected, got {}",
            report.accuracy
        );
    }

    #[test]
    fn small_class_is_rejected() {
        let features = vec![vec![0.0]; 12];
        let mut labels: Vec<String> = (0..9).map(|_| "a".to_string()).collect();
        labels.extend((0..3).map(|_| "b".to_string()));
        assert!(matches!(
            cross_validate(2, &features, &labels, 5, 42),
            Err(CoreError::BadClass(l, _)) if l == "b"
        ));
    }

    #[test]
    fn cross_validation_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let features: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let labels: Vec<String> = (0..60).map(|i| alloc::format!("c{}", i % 2)).collect();
        let a = cross_validate(3, &features, &labels, 5, 7).unwrap();
        let b = cross_validate(3, &features, &labels, 5, 7).unwrap();
        assert_eq!(a, b);
    }
}

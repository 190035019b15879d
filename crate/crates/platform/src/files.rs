//! JSON file schemas for persisted models and training data.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use radiosense_core::behavior::PeakConfig;
use radiosense_core::inference::KnnClassifier;
use radiosense_core::pca::{ClassStats, Matrix, PcaModel, TrainingSet};

use crate::{PlatformError, Result};

/// Write any serializable document as pretty JSON.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PlatformError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| PlatformError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| PlatformError::format(path.display().to_string(), e))?;
    use std::io::Write;
    w.write_all(b"\n").map_err(|e| PlatformError::io(path, e))?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| PlatformError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| PlatformError::format(path.display().to_string(), e))
}

/// Persisted form of a trained subspace model.
///
/// `U` is row-major, `V` rows by `P` columns. The audit covariance is
/// not persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModelFile {
    pub task_id: String,
    #[serde(rename = "V")]
    pub dim: usize,
    #[serde(rename = "P")]
    pub components: usize,
    #[serde(rename = "h", default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub threshold_fallback: bool,
    pub mean: Vec<f64>,
    /// Eigenvalues of the selected components, descending.
    pub eigenvalues: Vec<f64>,
    /// Full spectrum, all `V` eigenvalues descending.
    pub spectrum: Vec<f64>,
    #[serde(rename = "U")]
    pub subspace: Vec<Vec<f64>>,
    pub class_stats: Vec<ClassStatsFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStatsFile {
    pub label: String,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl From<&PcaModel> for PcaModelFile {
    fn from(m: &PcaModel) -> Self {
        PcaModelFile {
            task_id: m.task_id.clone(),
            dim: m.dim,
            components: m.components,
            threshold: m.threshold_used,
            threshold_fallback: m.threshold_fallback,
            mean: m.mean.clone(),
            eigenvalues: m.eigenvalues.clone(),
            spectrum: m.spectrum.clone(),
            subspace: m.subspace.to_rows(),
            class_stats: m
                .class_stats
                .iter()
                .map(|c| ClassStatsFile {
                    label: c.label.clone(),
                    mu: c.mean.clone(),
                    var: c.variance.clone(),
                })
                .collect(),
        }
    }
}

impl PcaModelFile {
    pub fn into_model(self) -> Result<PcaModel> {
        if self.mean.len() != self.dim || self.subspace.len() != self.dim {
            return Err(PlatformError::format("model file", "V does not match vectors"));
        }
        for row in &self.subspace {
            if row.len() != self.components {
                return Err(PlatformError::format("model file", "U columns do not match P"));
            }
        }
        let subspace = Matrix::from_rows(&self.subspace).map_err(PlatformError::Core)?;
        Ok(PcaModel {
            task_id: self.task_id,
            dim: self.dim,
            components: self.components,
            threshold_used: self.threshold,
            threshold_fallback: self.threshold_fallback,
            mean: self.mean,
            subspace,
            eigenvalues: self.eigenvalues,
            spectrum: self.spectrum,
            covariance: None,
            class_stats: self
                .class_stats
                .into_iter()
                .map(|c| ClassStats {
                    label: c.label,
                    mean: c.mu,
                    variance: c.var,
                })
                .collect(),
        })
    }
}

pub fn save_pca_model(path: &Path, model: &PcaModel) -> Result<()> {
    save_json(path, &PcaModelFile::from(model))
}

pub fn load_pca_model(path: &Path) -> Result<PcaModel> {
    load_json::<PcaModelFile>(path)?.into_model()
}

pub fn save_training_set(path: &Path, set: &TrainingSet) -> Result<()> {
    save_json(path, set)
}

pub fn load_training_set(path: &Path) -> Result<TrainingSet> {
    let set: TrainingSet = load_json(path)?;
    set.validate().map_err(PlatformError::Core)?;
    Ok(set)
}

/// Persisted KNN training data plus the peak-detection parameters the
/// features were computed with (they must match at query time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModelFile {
    pub task_id: String,
    pub neighbors: usize,
    pub peak_prominence: f64,
    pub peak_min_width_ms: f64,
    pub examples: Vec<KnnExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnExample {
    pub label: String,
    pub features: Vec<f64>,
}

impl KnnModelFile {
    pub fn peak_config(&self) -> PeakConfig {
        PeakConfig {
            prominence: self.peak_prominence,
            min_width_ms: self.peak_min_width_ms,
        }
    }

    pub fn fit(&self) -> Result<KnnClassifier> {
        let features: Vec<Vec<f64>> = self.examples.iter().map(|e| e.features.clone()).collect();
        let labels: Vec<String> = self.examples.iter().map(|e| e.label.clone()).collect();
        KnnClassifier::fit(self.neighbors, &features, &labels).map_err(Into::into)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use radiosense_core::cqi::Layout;
    use radiosense_core::pca::{train_pca, ComponentSelection};
    use std::collections::BTreeMap;
    use tempfile::tempdir;

    #[test]
    fn pca_model_round_trips_through_json() {
        let mut classes = BTreeMap::new();
        classes.insert(
            "a".to_string(),
            vec![vec![1.0, 0.5, 0.0], vec![-1.0, 0.25, 0.125]],
        );
        classes.insert("b".to_string(), vec![vec![0.0, 2.0, -1.0]]);
        let training = TrainingSet {
            task_id: "t".into(),
            layout: Layout { freq_count: 3, link_count: 1, time_count: 1 },
            classes,
        };
        let model = train_pca(&training, &[0.5, 0.5], ComponentSelection::Fixed(2)).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_pca_model(&path, &model).unwrap();
        let back = load_pca_model(&path).unwrap();
        assert_eq!(back.mean, model.mean);
        assert_eq!(back.subspace.to_rows(), model.subspace.to_rows());
        assert_eq!(back.eigenvalues, model.eigenvalues);
        assert_eq!(back.spectrum, model.spectrum);
        assert_eq!(back.class_stats, model.class_stats);
        assert!(back.covariance.is_none());
        // projections agree bit for bit
        let x = model.project(&[0.25, -0.5, 0.75]).unwrap();
        let y = back.project(&[0.25, -0.5, 0.75]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn training_set_round_trips() {
        let mut classes = BTreeMap::new();
        classes.insert("only".to_string(), vec![vec![1.0, 2.0]]);
        let set = TrainingSet {
            task_id: "t".into(),
            layout: Layout { freq_count: 2, link_count: 1, time_count: 1 },
            classes,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("training.json");
        save_training_set(&path, &set).unwrap();
        assert_eq!(load_training_set(&path).unwrap(), set);
    }

    #[test]
    fn model_file_rejects_inconsistent_dimensions() {
        let file = PcaModelFile {
            task_id: "t".into(),
            dim: 3,
            components: 2,
            threshold: None,
            threshold_fallback: false,
            mean: vec![0.0; 2], // wrong
            eigenvalues: vec![1.0, 0.5],
            spectrum: vec![1.0, 0.5, 0.1],
            subspace: vec![vec![1.0, 0.0]; 3],
            class_stats: Vec::new(),
        };
        assert!(file.into_model().is_err());
    }
}

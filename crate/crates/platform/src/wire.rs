//! JSON wire objects exchanged between gateways, the cloud and
//! subscribers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use radiosense_core::behavior::BehaviorFeatureVector;
use radiosense_core::cqi::{CqiType, SensingTask};
use radiosense_core::inference::LatentEstimate;

use crate::files::{KnnModelFile, PcaModelFile};

/// Half-open window span a feature vector was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub start_ms: i64,
    pub end_ms: i64,
}

/// The five behavior statistics attached to activity features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorExtra {
    pub peak_count: f64,
    pub peak_width_mean_ms: f64,
    pub inv_peak_width_mean_ms: f64,
    pub phase_dev_mean: f64,
    pub phase_dev_min: f64,
}

impl From<&BehaviorFeatureVector> for BehaviorExtra {
    fn from(b: &BehaviorFeatureVector) -> Self {
        BehaviorExtra {
            peak_count: b.peaks.peak_count() as f64,
            peak_width_mean_ms: b.peaks.mean_peak_width_ms,
            inv_peak_width_mean_ms: b.peaks.mean_inverted_peak_width_ms,
            phase_dev_mean: b.phase_dev_mean,
            phase_dev_min: b.phase_dev_min,
        }
    }
}

impl BehaviorExtra {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.peak_count,
            self.peak_width_mean_ms,
            self.inv_peak_width_mean_ms,
            self.phase_dev_mean,
            self.phase_dev_min,
        ]
    }
}

/// Feature payload of one device (or one gateway-aggregated mesh view).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFeatures {
    pub device_id: String,
    pub link_ids: Vec<u32>,
    pub cqi_type: CqiType,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<BehaviorExtra>,
}

/// One gateway-to-cloud feature push.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMessage {
    pub gw_id: String,
    pub task_id: String,
    pub timestamp_ms: i64,
    pub window: WindowSpan,
    pub devices: Vec<DeviceFeatures>,
}

impl FeatureMessage {
    /// Structural validation; returns the offending field path.
    pub fn validate(&self, expected_features: usize) -> Result<(), String> {
        if self.timestamp_ms < self.window.start_ms || self.timestamp_ms > self.window.end_ms {
            return Err("timestamp_ms: outside window".into());
        }
        if self.devices.is_empty() {
            return Err("devices: empty".into());
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.features.len() != expected_features {
                return Err(format!("devices[{i}].features: expected {expected_features}"));
            }
            if d.features.iter().any(|v| !v.is_finite()) {
                return Err(format!("devices[{i}].features: non-finite entry"));
            }
            if let Some(extra) = &d.extra {
                if extra.to_vec().iter().any(|v| !v.is_finite()) {
                    return Err(format!("devices[{i}].extra: non-finite entry"));
                }
            }
        }
        Ok(())
    }

    /// Full per-device vectors: subspace features plus behavior extras
    /// when present.
    pub fn device_vectors(&self) -> Vec<Vec<f64>> {
        self.devices
            .iter()
            .map(|d| {
                let mut v = d.features.clone();
                if let Some(extra) = &d.extra {
                    v.extend(extra.to_vec());
                }
                v
            })
            .collect()
    }
}

/// Latent estimate as served to consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEstimateWire {
    pub task_id: String,
    pub gw_ids: Vec<String>,
    pub timestamp_ms: i64,
    /// Most likely latent label.
    pub estimate: String,
    /// Posterior probability per label.
    pub posteriors: BTreeMap<String, f64>,
    /// Monotone per-task sequence number assigned by the cloud.
    pub seq: u64,
    /// Microseconds since the epoch when the triggering push arrived.
    pub ingested_at_us: u64,
}

impl LatentEstimateWire {
    pub fn from_estimate(
        estimate: &LatentEstimate,
        labels: &[String],
        seq: u64,
        ingested_at_us: u64,
    ) -> Self {
        let posteriors: BTreeMap<String, f64> = labels
            .iter()
            .cloned()
            .zip(estimate.posteriors.iter().copied())
            .collect();
        LatentEstimateWire {
            task_id: estimate.task_id.clone(),
            gw_ids: estimate.gw_ids.clone(),
            timestamp_ms: estimate.timestamp_ms,
            estimate: labels[estimate.estimate].clone(),
            posteriors,
            seq,
            ingested_at_us,
        }
    }
}

/// Profile a task is registered under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskProfile {
    #[default]
    Public,
    Private,
}

/// Body of `start_task`: the task plus optional pre-trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTaskRequest {
    pub task: SensingTask,
    #[serde(default)]
    pub profile: TaskProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PcaModelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnModelFile>,
}

/// Acknowledgment to a feature push.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushAck {
    pub accepted: bool,
    pub seq: u64,
}

/// Error body with the offending field path when applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// The resource gateways poll: active tasks assigned to one gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTasks {
    pub gw_id: String,
    pub active_tasks: Vec<TaskDescriptor>,
}

/// A task as seen in the control plane, with its model version so
/// gateways know when to re-fetch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub task: SensingTask,
    pub model_version: u64,
}

/// Model download body (`GET /api/{task_type}/model`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub task_id: String,
    pub model_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PcaModelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnModelFile>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message() -> FeatureMessage {
        FeatureMessage {
            gw_id: "gw0".into(),
            task_id: "t".into(),
            timestamp_ms: 600,
            window: WindowSpan { start_ms: 600, end_ms: 1200 },
            devices: vec![DeviceFeatures {
                device_id: "gw0".into(),
                link_ids: vec![0, 1],
                cqi_type: CqiType::Up,
                features: vec![0.1, -0.25, 3.5],
                extra: None,
            }],
        }
    }

    #[test]
    fn feature_message_round_trips_value_exact() {
        let msg = message();
        let json = serde_json::to_string(&msg).unwrap();
        let back: FeatureMessage = serde_json::from_str(&json).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn validation_reports_field_paths() {
        let msg = message();
        let err = msg.validate(12).unwrap_err();
        assert_eq!(err, "devices[0].features: expected 12");
        assert!(msg.validate(3).is_ok());
        let mut stale = message();
        stale.timestamp_ms = 1;
        assert!(stale.validate(3).unwrap_err().starts_with("timestamp_ms"));
        let mut nan = message();
        nan.devices[0].features[1] = f64::NAN;
        // NaN does not survive JSON anyway; validation catches direct construction
        assert!(nan.validate(3).is_err());
    }

    #[test]
    fn estimate_wire_sorts_labels_deterministically() {
        let wire = LatentEstimateWire {
            task_id: "t".into(),
            gw_ids: vec!["gw0".into()],
            timestamp_ms: 0,
            estimate: "b".into(),
            posteriors: [("b".to_string(), 0.75), ("a".to_string(), 0.25)]
                .into_iter()
                .collect(),
            seq: 1,
            ingested_at_us: 0,
        };
        let json = serde_json::to_string(&wire).unwrap();
        let posteriors = &json[json.find("\"posteriors\"").unwrap()..];
        let a_pos = posteriors.find("\"a\"").unwrap();
        let b_pos = posteriors.find("\"b\"").unwrap();
        assert!(a_pos < b_pos, "posterior keys serialize sorted");
        let back: LatentEstimateWire = serde_json::from_str(&json).unwrap();
        assert_eq!(back, wire);
    }
}

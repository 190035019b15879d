//! Offline pipeline shared by the gateway, the evaluator and the
//! training path: trace rows to pre-processed series to per-window
//! features to latent decisions.

use std::collections::BTreeMap;

use radiosense_core::behavior::{build_behavior_features, PeakConfig};
use radiosense_core::cqi::{
    correct_phase, denoise, interpolate_missing, window, CqiSeries, FeatureRecipe, SensingTask,
    TaskType,
};
use radiosense_core::inference::{
    gaussian_component, infer, FeatureBatch, GatewayFeatures, KnnClassifier,
};
use radiosense_core::pca::PcaModel;

use crate::trace::{TraceRow, TruthRow};
use crate::wire::{BehaviorExtra, DeviceFeatures, FeatureMessage, WindowSpan};
use crate::{PlatformError, Result};

/// Standard pre-manipulation chain: interpolate, phase-correct
/// (complex types), then median-denoise.
pub fn preprocess(series: &CqiSeries, denoise_len: usize) -> Result<CqiSeries> {
    let s = interpolate_missing(series)?;
    let s = if s.cqi_type.is_complex() { correct_phase(&s)? } else { s };
    denoise(&s, denoise_len).map_err(Into::into)
}

/// Build the gateway-aggregate series a task consumes from raw rows.
pub fn series_for_task(rows: &[TraceRow], task: &SensingTask, device_id: &str) -> Result<CqiSeries> {
    crate::trace::series_from_rows(
        device_id,
        rows,
        task.cqi_type,
        task.ota_profile.cqi_sampling_ms,
        task.ota_profile.subcarriers,
        &task.ota_profile.neighborhood_links,
    )
}

/// Feature payload of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub start_ms: i64,
    pub end_ms: i64,
    /// Subspace features, length P.
    pub features: Vec<f64>,
    /// Behavior statistics for `PCA_PEAK_PHASE` tasks.
    pub extra: Option<BehaviorExtra>,
}

impl WindowFeatures {
    /// Feature vector presented to inference (subspace plus extras).
    pub fn inference_vector(&self) -> Vec<f64> {
        let mut v = self.features.clone();
        if let Some(extra) = &self.extra {
            v.extend(extra.to_vec());
        }
        v
    }

    pub fn to_message(&self, gw_id: &str, task: &SensingTask) -> FeatureMessage {
        FeatureMessage {
            gw_id: gw_id.to_string(),
            task_id: task.task_id.clone(),
            timestamp_ms: self.start_ms,
            window: WindowSpan { start_ms: self.start_ms, end_ms: self.end_ms },
            devices: vec![DeviceFeatures {
                device_id: gw_id.to_string(),
                link_ids: task.ota_profile.neighborhood_links.clone(),
                cqi_type: task.cqi_type,
                features: self.features.clone(),
                extra: self.extra.clone(),
            }],
        }
    }
}

/// Compute the features of one already-preprocessed window or segment.
pub fn segment_features(
    segment: &CqiSeries,
    task: &SensingTask,
    model: &PcaModel,
    peak_cfg: Option<&PeakConfig>,
) -> Result<WindowFeatures> {
    let (start_ms, end_ms) = segment
        .span()
        .ok_or_else(|| PlatformError::Config("empty window".into()))?;
    match task.feature_recipe {
        FeatureRecipe::Pca => Ok(WindowFeatures {
            start_ms,
            end_ms,
            features: model.project_series(segment)?,
            extra: None,
        }),
        FeatureRecipe::PcaPeakPhase => {
            let cfg = peak_cfg.ok_or_else(|| {
                PlatformError::Config("peak configuration required for behavior features".into())
            })?;
            let behavior = build_behavior_features(segment, model, cfg)?;
            Ok(WindowFeatures {
                start_ms,
                end_ms,
                features: behavior.pca_features.clone(),
                extra: Some(BehaviorExtra::from(&behavior)),
            })
        }
    }
}

/// Features for every full window of a pre-processed series.
pub fn window_features(
    series: &CqiSeries,
    task: &SensingTask,
    model: &PcaModel,
    peak_cfg: Option<&PeakConfig>,
) -> Result<Vec<WindowFeatures>> {
    let windows = window(series, task.window_ms, task.hop_ms())?;
    windows
        .iter()
        .map(|w| segment_features(w, task, model, peak_cfg))
        .collect()
}

/// Log-domain mixture components for one gateway vector: one `G^k`
/// per latent label, in task label order.
pub fn components_for(
    task: &SensingTask,
    model: &PcaModel,
    knn: Option<&KnnClassifier>,
    pca_features: &[f64],
    full_vector: &[f64],
) -> Result<Vec<f64>> {
    task.latent_labels
        .iter()
        .map(|label| match task.feature_recipe {
            FeatureRecipe::Pca => gaussian_component(model, pca_features, label).map_err(Into::into),
            FeatureRecipe::PcaPeakPhase => {
                let clf = knn.ok_or_else(|| {
                    PlatformError::Config("KNN classifier required for activity tasks".into())
                })?;
                clf.knn_component(full_vector, label).map_err(Into::into)
            }
        })
        .collect()
}

/// One decided window of an offline evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecidedWindow {
    pub start_ms: i64,
    pub truth: String,
    pub estimate: String,
    pub posteriors: Vec<f64>,
}

/// Offline end-to-end evaluation of a trace against ground truth.
///
/// Windows are matched to truth rows by window start; the offline path
/// plays the role of a single gateway.
pub fn evaluate_trace(
    rows: &[TraceRow],
    truth: &[TruthRow],
    task: &SensingTask,
    model: &PcaModel,
    knn: Option<&KnnClassifier>,
    peak_cfg: Option<&PeakConfig>,
    denoise_len: usize,
) -> Result<Vec<DecidedWindow>> {
    let series = series_for_task(rows, task, "offline")?;
    let series = preprocess(&series, denoise_len)?;
    let features = window_features(&series, task, model, peak_cfg)?;
    let truth_by_start: BTreeMap<i64, &str> = truth
        .iter()
        .map(|r| (r.window_start_ms, r.label.as_str()))
        .collect();
    let mut decided = Vec::new();
    for wf in &features {
        let Some(&truth_label) = truth_by_start.get(&wf.start_ms) else {
            continue;
        };
        let components: Vec<Vec<f64>> =
            components_for(task, model, knn, &wf.features, &wf.inference_vector())?
                .into_iter()
                .map(|g| vec![g])
                .collect();
        let batch = FeatureBatch {
            task_id: task.task_id.clone(),
            timestamp_ms: wf.start_ms,
            gateways: vec![GatewayFeatures {
                gw_id: "offline".into(),
                features: wf.inference_vector(),
            }],
        };
        let estimate = infer(task, &batch, &components)?;
        decided.push(DecidedWindow {
            start_ms: wf.start_ms,
            truth: truth_label.to_string(),
            estimate: task.latent_labels[estimate.estimate].clone(),
            posteriors: estimate.posteriors,
        });
    }
    Ok(decided)
}

/// Peak-detection parameters derived from calibration: prominence is
/// twice the deviation of the background's first-component projection,
/// width floor is twice the sampling interval.
pub fn peak_config_from_background(
    model: &PcaModel,
    calibration: &CqiSeries,
) -> Result<PeakConfig> {
    let series = model.component_series(calibration, 0)?;
    let n = series.len() as f64;
    if series.is_empty() {
        return Err(PlatformError::Config("empty calibration series".into()));
    }
    let mean: f64 = series.iter().map(|(_, v)| v).sum::<f64>() / n;
    let var: f64 = series.iter().map(|(_, v)| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    Ok(PeakConfig {
        prominence: (2.0 * sigma).max(1e-9),
        min_width_ms: 2.0 * f64::from(calibration.sampling_ms),
    })
}

/// True when the task needs behavior (peak and phase) features.
pub fn needs_behavior(task: &SensingTask) -> bool {
    task.feature_recipe == FeatureRecipe::PcaPeakPhase || task.task_type == TaskType::Activity
}

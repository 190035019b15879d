//! Per-class training scene generation and training-set emission.
//!
//! Training runs the simulator once per latent label with the
//! matching scripted ground truth, pushes the trace through the same
//! pre-processing the gateway applies, and collects one snapshot
//! vector per window or scripted segment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use radiosense_core::cqi::{CqiSeries, SensingTask, TaskType};
use radiosense_core::pca::TrainingSet;

use crate::eval::{preprocess, series_for_task};
use crate::{PlatformError, Result};

use super::{label_seed, simulate, ActivityInterval, Scene, Target, Waypoint};

/// Knobs for generated training scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    /// Training examples (windows or segments) per class.
    #[serde(default = "default_examples")]
    pub examples_per_class: usize,
    /// Where the occupied-class target parks; defaults to the midpoint
    /// of the first active link, nudged off-axis.
    #[serde(default)]
    pub occupied_position: Option<[f64; 2]>,
    /// Scripted activity event length.
    #[serde(default = "default_event_ms")]
    pub event_ms: u32,
    /// Quiet gap between scripted events.
    #[serde(default = "default_gap_ms")]
    pub gap_ms: u32,
    /// Moving-median length applied during pre-processing.
    #[serde(default = "default_denoise_len")]
    pub denoise_len: usize,
    /// Orbit radii (x, y) of the occupied-class training target.
    #[serde(default = "default_detection_orbit")]
    pub detection_orbit_m: [f64; 2],
    /// Orbit radius of per-cell localization training targets.
    #[serde(default = "default_cell_orbit")]
    pub cell_orbit_m: f64,
}

fn default_examples() -> usize {
    30
}
fn default_event_ms() -> u32 {
    1500
}
fn default_gap_ms() -> u32 {
    1200
}
fn default_denoise_len() -> usize {
    3
}
fn default_detection_orbit() -> [f64; 2] {
    [1.2, 0.8]
}
fn default_cell_orbit() -> f64 {
    0.15
}

impl Default for TrainingSpec {
    fn default() -> Self {
        TrainingSpec {
            examples_per_class: default_examples(),
            occupied_position: None,
            event_ms: default_event_ms(),
            gap_ms: default_gap_ms(),
            denoise_len: default_denoise_len(),
            detection_orbit_m: default_detection_orbit(),
            cell_orbit_m: default_cell_orbit(),
        }
    }
}

/// A target circling `center` so the class statistics capture the
/// position spread the task will see at run time, not a point.
fn orbiting(
    base: &Scene,
    label: &str,
    center: [f64; 2],
    radius: [f64; 2],
    duration_ms: i64,
) -> Scene {
    let mut scene = base.clone();
    scene.seed = label_seed(base.seed, label);
    scene.duration_ms = duration_ms;
    let period_ms = 8000i64;
    let step_ms = 250i64;
    let waypoints: Vec<Waypoint> = (0..=duration_ms / step_ms)
        .map(|k| {
            let t_ms = k * step_ms;
            let phase = std::f64::consts::TAU * (t_ms % period_ms) as f64 / period_ms as f64;
            Waypoint {
                t_ms,
                x: center[0] + radius[0] * phase.cos(),
                y: center[1] + radius[1] * phase.sin(),
            }
        })
        .collect();
    scene.targets = vec![Target::Trajectory { waypoints }];
    scene
}

fn empty(base: &Scene, label: &str, duration_ms: i64) -> Scene {
    let mut scene = base.clone();
    scene.seed = label_seed(base.seed, label);
    scene.duration_ms = duration_ms;
    scene.targets = Vec::new();
    scene
}

fn default_occupied_position(base: &Scene, task: &SensingTask) -> Result<[f64; 2]> {
    let geometry = base.link_geometry()?;
    let link = *task
        .ota_profile
        .neighborhood_links
        .first()
        .ok_or_else(|| PlatformError::Config("task has no active links".into()))?;
    let (tx, rx) = geometry
        .get(link as usize)
        .copied()
        .ok_or_else(|| PlatformError::Config(format!("link {link} not deployed")))?;
    Ok([(tx[0] + rx[0]) / 2.0 + 0.15, (tx[1] + rx[1]) / 2.0 + 0.1])
}

/// Empty-vs-occupied pair for a detection task.
pub fn detection_training_scenes(
    base: &Scene,
    task: &SensingTask,
    spec: &TrainingSpec,
) -> Result<BTreeMap<String, Scene>> {
    let duration = spec.examples_per_class as i64 * i64::from(task.window_ms);
    let position = match spec.occupied_position {
        Some(p) => p,
        None => default_occupied_position(base, task)?,
    };
    let mut scenes = BTreeMap::new();
    scenes.insert(task.latent_labels[0].clone(), empty(base, &task.latent_labels[0], duration));
    scenes.insert(
        task.latent_labels[1].clone(),
        orbiting(base, &task.latent_labels[1], position, spec.detection_orbit_m, duration),
    );
    Ok(scenes)
}

/// One dwell scene per cell for a localization task.
pub fn localization_training_scenes(
    base: &Scene,
    task: &SensingTask,
    spec: &TrainingSpec,
) -> Result<BTreeMap<String, Scene>> {
    if base.cells.is_empty() {
        return Err(PlatformError::Config("localization scene has no cells".into()));
    }
    let duration = spec.examples_per_class as i64 * i64::from(task.window_ms);
    let mut scenes = BTreeMap::new();
    for cell in &base.cells {
        if !task.latent_labels.contains(&cell.label) {
            return Err(PlatformError::Config(format!(
                "cell {} not among task labels",
                cell.label
            )));
        }
        scenes.insert(
            cell.label.clone(),
            orbiting(
                base,
                &cell.label,
                [cell.x, cell.y],
                [spec.cell_orbit_m, spec.cell_orbit_m],
                duration,
            ),
        );
    }
    Ok(scenes)
}

/// One scripted scene per activity label; the no-activity label gets a
/// quiet scene sliced at the same interval positions.
pub fn activity_training_scenes(
    base: &Scene,
    task: &SensingTask,
    spec: &TrainingSpec,
) -> Result<BTreeMap<String, Scene>> {
    let position = match base.targets.iter().find_map(|t| match t {
        Target::Activity { position, .. } => Some(*position),
        Target::Trajectory { .. } => None,
    }) {
        Some(p) => p,
        None => default_occupied_position(base, task)?,
    };
    let period = i64::from(spec.event_ms + spec.gap_ms);
    let duration = spec.examples_per_class as i64 * period;
    let mut scenes = BTreeMap::new();
    for label in &task.latent_labels {
        let mut scene = empty(base, label, duration);
        if label != &base.none_label {
            let script: Vec<ActivityInterval> = (0..spec.examples_per_class as i64)
                .map(|k| ActivityInterval {
                    start_ms: k * period,
                    end_ms: k * period + i64::from(spec.event_ms),
                    label: label.clone(),
                })
                .collect();
            scene.targets = vec![Target::Activity { position, script }];
        }
        scenes.insert(label.clone(), scene);
    }
    Ok(scenes)
}

/// Generate the per-label scenes for whatever task type is configured.
pub fn training_scenes(
    base: &Scene,
    task: &SensingTask,
    spec: &TrainingSpec,
) -> Result<BTreeMap<String, Scene>> {
    match task.task_type {
        TaskType::Detection => detection_training_scenes(base, task, spec),
        TaskType::Localization => localization_training_scenes(base, task, spec),
        TaskType::Activity => activity_training_scenes(base, task, spec),
    }
}

/// Simulate every class scene and return the pre-processed example
/// series: scripted segments for activity tasks, fixed windows
/// otherwise.
pub fn training_segments(
    scenes: &BTreeMap<String, Scene>,
    task: &SensingTask,
    spec: &TrainingSpec,
) -> Result<Vec<(String, CqiSeries)>> {
    for label in scenes.keys() {
        if !task.latent_labels.contains(label) {
            return Err(PlatformError::Config(format!(
                "training label {label} not among task labels"
            )));
        }
    }
    for label in &task.latent_labels {
        if !scenes.contains_key(label) {
            return Err(PlatformError::Config(format!("no training scene for label {label}")));
        }
    }
    let mut out = Vec::new();
    for (label, scene) in scenes {
        let sim = simulate(scene, task)?;
        let series = series_for_task(&sim.rows, task, &format!("train-{label}"))?;
        let series = preprocess(&series, spec.denoise_len)?;
        match task.task_type {
            TaskType::Activity => {
                let period = i64::from(spec.event_ms + spec.gap_ms);
                for k in 0..spec.examples_per_class as i64 {
                    let start = k * period;
                    let segment = series
                        .slice_time(start, start + i64::from(spec.event_ms))
                        .map_err(PlatformError::Core)?;
                    if !segment.is_empty() {
                        out.push((label.clone(), segment));
                    }
                }
            }
            _ => {
                let windows = radiosense_core::cqi::window(&series, task.window_ms, task.window_ms)
                    .map_err(PlatformError::Core)?;
                for w in windows {
                    out.push((label.clone(), w));
                }
            }
        }
    }
    Ok(out)
}

/// Run the simulator per label and assemble the training set of
/// snapshot vectors.
pub fn emit_training_set(
    scenes: &BTreeMap<String, Scene>,
    task: &SensingTask,
    spec: &TrainingSpec,
) -> Result<TrainingSet> {
    let segments = training_segments(scenes, task, spec)?;
    let mut classes: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (label, segment) in segments {
        classes
            .entry(label)
            .or_default()
            .push(segment.snapshot_vector().map_err(PlatformError::Core)?);
    }
    let layout = radiosense_core::cqi::Layout {
        freq_count: usize::from(task.ota_profile.subcarriers),
        link_count: task.ota_profile.neighborhood_links.len(),
        time_count: 1,
    };
    let set = TrainingSet { task_id: task.task_id.clone(), layout, classes };
    set.validate().map_err(PlatformError::Core)?;
    Ok(set)
}

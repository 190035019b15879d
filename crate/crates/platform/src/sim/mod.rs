//! Synthetic CQI trace generation with ground truth.
//!
//! Two channel models feed the pipeline: elliptical link shadowing for
//! RSSI meshes and a discrete multipath model for per-subcarrier CSI.
//! Both are deterministic functions of the scene (seed included), and
//! their noise draws do not depend on target presence, so parameter
//! sweeps stay comparable sample by sample.

mod csi;
mod rssi;
mod training;

pub use csi::simulate_csi;
pub use rssi::simulate_rssi;
pub use training::{
    activity_training_scenes, detection_training_scenes, emit_training_set,
    localization_training_scenes, training_scenes, training_segments, TrainingSpec,
};

use serde::{Deserialize, Serialize};

use radiosense_core::cqi::{CqiType, DeploymentConfig, SensingTask, TaskType};

use crate::trace::{TraceRow, TruthRow};
use crate::{PlatformError, Result};

pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;

/// Per-sample noise presets; RSSI noise in dB, CSI noise per complex
/// component relative to a unit line-of-sight path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    HighSnr,
    MidSnr,
    LowSnr,
}

impl NoisePreset {
    pub fn rssi_sigma_db(self) -> f64 {
        match self {
            NoisePreset::HighSnr => 1.0,
            NoisePreset::MidSnr => 2.5,
            NoisePreset::LowSnr => 5.0,
        }
    }

    pub fn csi_sigma(self) -> f64 {
        match self {
            NoisePreset::HighSnr => 0.05,
            NoisePreset::MidSnr => 0.15,
            NoisePreset::LowSnr => 0.40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_ms: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub start_ms: i64,
    pub end_ms: i64,
    /// `head` or `arm`; gaps between intervals are no-activity.
    pub label: String,
}

/// A moving subject: either a 2-D trajectory (detection and
/// localization) or a scripted sequence of in-place activities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Trajectory { waypoints: Vec<Waypoint> },
    Activity { position: [f64; 2], script: Vec<ActivityInterval> },
}

impl Target {
    /// Position at time `t` for trajectory targets; holds the first or
    /// last waypoint outside the scripted span.
    pub fn position_at(&self, t_ms: i64) -> Option<[f64; 2]> {
        match self {
            Target::Trajectory { waypoints } => {
                if waypoints.is_empty() {
                    return None;
                }
                if t_ms <= waypoints[0].t_ms {
                    return Some([waypoints[0].x, waypoints[0].y]);
                }
                let last = waypoints.last().unwrap();
                if t_ms >= last.t_ms {
                    return Some([last.x, last.y]);
                }
                let idx = waypoints.partition_point(|w| w.t_ms <= t_ms);
                let (a, b) = (&waypoints[idx - 1], &waypoints[idx]);
                let alpha = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
                Some([a.x + alpha * (b.x - a.x), a.y + alpha * (b.y - a.y)])
            }
            Target::Activity { .. } => None,
        }
    }

    pub fn activity_at(&self, t_ms: i64) -> Option<(&str, &ActivityInterval)> {
        match self {
            Target::Activity { script, .. } => script
                .iter()
                .find(|iv| iv.start_ms <= t_ms && t_ms < iv.end_ms)
                .map(|iv| (iv.label.as_str(), iv)),
            Target::Trajectory { .. } => None,
        }
    }
}

/// Elliptical shadowing parameters for the RSSI model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiParams {
    /// Attenuation a target inside the link ellipse causes, in dB.
    #[serde(default = "default_phi_db")]
    pub phi_db: f64,
    /// Excess path length of the ellipse boundary, in meters.
    #[serde(default = "default_lambda_m")]
    pub lambda_m: f64,
    /// Reference received power at 1 m, in dBm.
    #[serde(default = "default_ref_dbm")]
    pub ref_dbm: f64,
    #[serde(default = "default_path_loss_exponent")]
    pub path_loss_exponent: f64,
}

fn default_phi_db() -> f64 {
    5.0
}
fn default_lambda_m() -> f64 {
    0.3
}
fn default_ref_dbm() -> f64 {
    -40.0
}
fn default_path_loss_exponent() -> f64 {
    2.0
}

impl Default for RssiParams {
    fn default() -> Self {
        RssiParams {
            phi_db: default_phi_db(),
            lambda_m: default_lambda_m(),
            ref_dbm: default_ref_dbm(),
            path_loss_exponent: default_path_loss_exponent(),
        }
    }
}

/// Discrete multipath parameters for the CSI model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiParams {
    /// Line-of-sight amplitude; every other gain and the noise scale
    /// with it, so it sets the absolute CQI unit (and with it the
    /// eigenvalue scale a selection threshold works against).
    #[serde(default = "default_los_gain")]
    pub los_gain: f64,
    #[serde(default = "default_static_scatterers")]
    pub static_scatterers: usize,
    /// Gain scale of static scatterers relative to the unit LOS path.
    #[serde(default = "default_static_gain")]
    pub static_gain: f64,
    /// Maximum excess delay of static scatterers, nanoseconds.
    #[serde(default = "default_static_excess_ns")]
    pub static_excess_ns: f64,
    /// Gain of a localization/detection target scatterer at zero
    /// excess path (decays with excess path length squared).
    #[serde(default = "default_target_gain")]
    pub target_gain: f64,
    /// Head turns: slow 0.5 Hz delay excursion, modest constant gain.
    #[serde(default = "default_head_gain")]
    pub head_gain: f64,
    #[serde(default = "default_head_delay_ns")]
    pub head_delay_ns: f64,
    /// Arm movements: strong multi-lobe gain modulation at 2 Hz with a
    /// small constant excess delay.
    #[serde(default = "default_arm_gain")]
    pub arm_gain: f64,
    #[serde(default = "default_arm_rate_hz")]
    pub arm_rate_hz: f64,
    #[serde(default = "default_arm_delay_ns")]
    pub arm_delay_ns: f64,
}

fn default_los_gain() -> f64 {
    1.0
}
fn default_static_scatterers() -> usize {
    4
}
fn default_static_gain() -> f64 {
    0.2
}
fn default_static_excess_ns() -> f64 {
    8.0
}
fn default_target_gain() -> f64 {
    0.8
}
fn default_head_gain() -> f64 {
    0.35
}
fn default_head_delay_ns() -> f64 {
    40.0
}
fn default_arm_gain() -> f64 {
    0.9
}
fn default_arm_rate_hz() -> f64 {
    2.0
}
fn default_arm_delay_ns() -> f64 {
    3.0
}

impl Default for CsiParams {
    fn default() -> Self {
        CsiParams {
            los_gain: default_los_gain(),
            static_scatterers: default_static_scatterers(),
            static_gain: default_static_gain(),
            static_excess_ns: default_static_excess_ns(),
            target_gain: default_target_gain(),
            head_gain: default_head_gain(),
            head_delay_ns: default_head_delay_ns(),
            arm_gain: default_arm_gain(),
            arm_rate_hz: default_arm_rate_hz(),
            arm_delay_ns: default_arm_delay_ns(),
        }
    }
}

/// A named position the localization task can decide on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Everything a simulation run depends on. Identical scenes (seed
/// included) produce byte-identical traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub deployment: DeploymentConfig,
    /// Per-run seed: noise draws and anything run-specific.
    pub seed: u64,
    /// Environment seed: the static multipath layout. Training and
    /// evaluation scenes of one deployment must share it, the way a
    /// calibration stage shares the physical environment.
    #[serde(default)]
    pub environment_seed: u64,
    pub noise_preset: NoisePreset,
    pub duration_ms: i64,
    #[serde(default)]
    pub rssi: RssiParams,
    #[serde(default)]
    pub csi: CsiParams,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub cells: Vec<Cell>,
    #[serde(default = "default_none_label")]
    pub none_label: String,
}

fn default_none_label() -> String {
    "no_activity".into()
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.deployment.validate().map_err(PlatformError::Core)?;
        if self.duration_ms <= 0 {
            return Err(PlatformError::Config("scene duration must be positive".into()));
        }
        for t in &self.targets {
            if let Target::Activity { script, .. } = t {
                let mut prev_end = i64::MIN;
                for iv in script {
                    if iv.start_ms < prev_end {
                        return Err(PlatformError::Config(
                            "activity intervals must not overlap".into(),
                        ));
                    }
                    if iv.end_ms <= iv.start_ms {
                        return Err(PlatformError::Config("empty activity interval".into()));
                    }
                    prev_end = iv.end_ms;
                }
            }
        }
        Ok(())
    }

    pub fn nearest_cell(&self, p: [f64; 2]) -> Option<&Cell> {
        self.cells.iter().min_by(|a, b| {
            let da = (a.x - p[0]).powi(2) + (a.y - p[1]).powi(2);
            let db = (b.x - p[0]).powi(2) + (b.y - p[1]).powi(2);
            da.partial_cmp(&db).unwrap()
        })
    }

    /// Endpoint positions of every deployment link, indexed by link id.
    pub fn link_geometry(&self) -> Result<Vec<([f64; 2], [f64; 2])>> {
        self.deployment
            .links
            .iter()
            .map(|l| {
                let tx = self
                    .deployment
                    .device_position(&l.tx_device)
                    .ok_or_else(|| PlatformError::Config(format!("unknown device {}", l.tx_device)))?;
                let rx = self
                    .deployment
                    .device_position(&l.rx_device)
                    .ok_or_else(|| PlatformError::Config(format!("unknown device {}", l.rx_device)))?;
                Ok((tx, rx))
            })
            .collect()
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Excess path length of a reflection off `p` relative to the direct
/// link path, in meters.
pub fn excess_path(tx: [f64; 2], rx: [f64; 2], p: [f64; 2]) -> f64 {
    distance(tx, p) + distance(p, rx) - distance(tx, rx)
}

/// FNV-1a of a label, used to derive per-class seeds.
pub fn label_seed(base: u64, label: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    base ^ h
}

/// Simulation output: the raw trace plus one truth label per window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub rows: Vec<TraceRow>,
    pub truth: Vec<TruthRow>,
}

/// Run the channel model matching the task's CQI type.
pub fn simulate(scene: &Scene, task: &SensingTask) -> Result<SimOutput> {
    scene.validate()?;
    task.validate().map_err(PlatformError::Core)?;
    let rows = match task.cqi_type {
        CqiType::Up => simulate_rssi(scene, task)?,
        CqiType::Phy | CqiType::Iq => simulate_csi(scene, task)?,
    };
    let truth = ground_truth(scene, task);
    Ok(SimOutput { rows, truth })
}

/// Derive the per-window latent label from scene geometry and scripts.
pub fn ground_truth(scene: &Scene, task: &SensingTask) -> Vec<TruthRow> {
    let window = i64::from(task.window_ms);
    let hop = i64::from(task.hop_ms());
    let mut rows = Vec::new();
    let mut start = 0i64;
    while start + window <= scene.duration_ms {
        let center = start + window / 2;
        let label = match task.task_type {
            TaskType::Detection => {
                let occupied = scene.targets.iter().any(|t| {
                    t.position_at(center)
                        .map(|p| scene.deployment.area.contains(p))
                        .unwrap_or(false)
                });
                task.latent_labels[usize::from(occupied)].clone()
            }
            TaskType::Localization => {
                let pos = scene
                    .targets
                    .iter()
                    .find_map(|t| t.position_at(center))
                    .unwrap_or([f64::INFINITY, f64::INFINITY]);
                scene
                    .nearest_cell(pos)
                    .map(|c| c.label.clone())
                    .unwrap_or_else(|| scene.none_label.clone())
            }
            TaskType::Activity => scene
                .targets
                .iter()
                .find_map(|t| t.activity_at(center).map(|(l, _)| l.to_string()))
                .unwrap_or_else(|| scene.none_label.clone()),
        };
        rows.push(TruthRow { window_start_ms: start, label });
        start += hop;
    }
    rows
}

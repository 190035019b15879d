use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Category of channel quality information a radio interface reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CqiType {
    /// Physical-layer channel state information: complex per-subcarrier response.
    #[serde(rename = "PHY")]
    Phy,
    /// Upper-layer scalar quality: RSSI in dBm, LQI and similar aggregates.
    #[serde(rename = "UP")]
    Up,
    /// Raw IQ envelope samples (stored, not analyzed).
    #[serde(rename = "IQ")]
    Iq,
}

impl CqiType {
    /// Complex-valued types carry meaningful phase.
    pub fn is_complex(self) -> bool {
        matches!(self, CqiType::Phy | CqiType::Iq)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CqiType::Phy => "PHY",
            CqiType::Up => "UP",
            CqiType::Iq => "IQ",
        }
    }
}

impl core::fmt::Display for CqiType {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for CqiType {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PHY" => Ok(CqiType::Phy),
            "UP" => Ok(CqiType::Up),
            "IQ" => Ok(CqiType::Iq),
            other => Err(CoreError::invalid("cqi_type", other)),
        }
    }
}

/// One receiver-side CQI measurement.
///
/// `value` is complex for PHY/IQ; UP measurements (RSSI in dBm, LQI) are
/// real scalars stored in the real part with a zero imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqiSample {
    pub time_ms: i64,
    pub freq_index: u16,
    pub link_id: u32,
    pub cqi_type: CqiType,
    pub value: Complex64,
}

/// Declared dimensions of a series; the flattened sample vector has
/// `V = freq_count * link_count * time_count` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    #[serde(rename = "F")]
    pub freq_count: usize,
    #[serde(rename = "L")]
    pub link_count: usize,
    #[serde(rename = "Nt")]
    pub time_count: usize,
}

impl Layout {
    pub fn volume(&self) -> usize {
        self.freq_count * self.link_count * self.time_count
    }

    /// Flat index of `(freq, link, time)`.
    ///
    /// Flattening order is fixed crate-wide: frequency is the slowest
    /// dimension, then link, then time:
    /// `v = (f * L + l) * Nt + t`.
    pub fn index(&self, freq: usize, link: usize, time: usize) -> usize {
        (freq * self.link_count + link) * self.time_count + time
    }

    /// Flat index of stream `(freq, link)` in snapshot (per-time) space.
    pub fn stream_index(&self, freq: usize, link: usize) -> usize {
        freq * self.link_count + link
    }

    pub fn stream_count(&self) -> usize {
        self.freq_count * self.link_count
    }
}

/// A CQI time series from one device (or one gateway-aggregated mesh view).
///
/// Samples are kept in canonical order: ascending time, then declared
/// link order, then subcarrier index. The declared `link_ids` order
/// fixes the flattening of the link dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiSeries {
    pub device_id: String,
    pub cqi_type: CqiType,
    /// Nominal sampling interval of the uniform grid, in milliseconds.
    pub sampling_ms: u32,
    /// Number of subcarriers per link (1 for RSSI-style scalars).
    pub freq_count: u16,
    /// Declared link order; positions here define the link dimension.
    pub link_ids: Vec<u32>,
    samples: Vec<CqiSample>,
}

impl CqiSeries {
    pub fn new(
        device_id: impl Into<String>,
        cqi_type: CqiType,
        sampling_ms: u32,
        freq_count: u16,
        link_ids: Vec<u32>,
        mut samples: Vec<CqiSample>,
    ) -> Result<Self> {
        if sampling_ms == 0 {
            return Err(CoreError::invalid("sampling_ms", "must be positive"));
        }
        if freq_count == 0 || link_ids.is_empty() {
            return Err(CoreError::invalid("layout", "freq_count and link_ids must be non-empty"));
        }
        let link_pos: BTreeMap<u32, usize> =
            link_ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        if link_pos.len() != link_ids.len() {
            return Err(CoreError::invalid("link_ids", "duplicate link id"));
        }
        for s in &samples {
            if s.cqi_type != cqi_type {
                return Err(CoreError::invalid("cqi_type", "mixed CQI types in one series"));
            }
            if s.freq_index >= freq_count {
                return Err(CoreError::invalid("freq_index", "outside declared subcarrier count"));
            }
            if !link_pos.contains_key(&s.link_id) {
                return Err(CoreError::invalid("link_id", "not in declared link set"));
            }
            if cqi_type == CqiType::Up && s.value.im != 0.0 {
                return Err(CoreError::invalid("value", "UP samples must be real"));
            }
        }
        samples.sort_by(|a, b| {
            (a.time_ms, link_pos[&a.link_id], a.freq_index)
                .cmp(&(b.time_ms, link_pos[&b.link_id], b.freq_index))
        });
        // strictly increasing per stream == no duplicate (time, link, freq)
        for w in samples.windows(2) {
            if w[0].time_ms == w[1].time_ms
                && w[0].link_id == w[1].link_id
                && w[0].freq_index == w[1].freq_index
            {
                return Err(CoreError::invalid("samples", "duplicate timestamp in stream"));
            }
        }
        Ok(CqiSeries {
            device_id: device_id.into(),
            cqi_type,
            sampling_ms,
            freq_count,
            link_ids,
            samples,
        })
    }

    pub fn samples(&self) -> &[CqiSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Samples grouped per `(link_id, freq_index)` stream, time-ascending.
    pub fn streams(&self) -> BTreeMap<(u32, u16), Vec<(i64, Complex64)>> {
        let mut map: BTreeMap<(u32, u16), Vec<(i64, Complex64)>> = BTreeMap::new();
        for s in &self.samples {
            map.entry((s.link_id, s.freq_index))
                .or_default()
                .push((s.time_ms, s.value));
        }
        map
    }

    /// Sorted distinct sample timestamps.
    pub fn times(&self) -> Vec<i64> {
        let mut t: Vec<i64> = self.samples.iter().map(|s| s.time_ms).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Half-open time span `[first, last + sampling_ms)` covered by the series.
    pub fn span(&self) -> Option<(i64, i64)> {
        let t = self.times();
        let first = *t.first()?;
        let last = *t.last()?;
        Some((first, last + i64::from(self.sampling_ms)))
    }

    pub fn layout(&self) -> Layout {
        Layout {
            freq_count: usize::from(self.freq_count),
            link_count: self.link_ids.len(),
            time_count: self.times().len(),
        }
    }

    fn link_positions(&self) -> BTreeMap<u32, usize> {
        self.link_ids.iter().enumerate().map(|(i, &l)| (l, i)).collect()
    }

    /// Flatten to the canonical value vector of size `V = F * L * Nt`.
    ///
    /// Requires a full uniform grid: every stream must hold a sample at
    /// every distinct timestamp (run `interpolate_missing` first).
    /// Returns the values plus the time grid they are indexed by.
    pub fn flatten(&self) -> Result<(Vec<Complex64>, Vec<i64>)> {
        let times = self.times();
        let layout = self.layout();
        let time_pos: BTreeMap<i64, usize> =
            times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let link_pos = self.link_positions();
        let mut values = alloc::vec![Complex64::new(f64::NAN, 0.0); layout.volume()];
        for s in &self.samples {
            let v = layout.index(
                usize::from(s.freq_index),
                link_pos[&s.link_id],
                time_pos[&s.time_ms],
            );
            values[v] = s.value;
        }
        if values.iter().any(|c| c.re.is_nan()) {
            return Err(CoreError::invalid(
                "samples",
                "grid incomplete: some (freq, link, time) slots missing",
            ));
        }
        Ok((values, times))
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(
        device_id: impl Into<String>,
        cqi_type: CqiType,
        sampling_ms: u32,
        freq_count: u16,
        link_ids: Vec<u32>,
        times: &[i64],
        values: &[Complex64],
    ) -> Result<Self> {
        let layout = Layout {
            freq_count: usize::from(freq_count),
            link_count: link_ids.len(),
            time_count: times.len(),
        };
        if values.len() != layout.volume() {
            return Err(CoreError::dims(layout.volume(), values.len(), "unflatten values"));
        }
        let mut samples = Vec::with_capacity(values.len());
        for f in 0..layout.freq_count {
            for (l, &link_id) in link_ids.iter().enumerate() {
                for (ti, &t) in times.iter().enumerate() {
                    samples.push(CqiSample {
                        time_ms: t,
                        freq_index: f as u16,
                        link_id,
                        cqi_type,
                        value: values[layout.index(f, l, ti)],
                    });
                }
            }
        }
        CqiSeries::new(device_id, cqi_type, sampling_ms, freq_count, link_ids, samples)
    }

    /// Time-averaged snapshot vector used as the subspace-model input.
    ///
    /// Averaging runs per `(freq, link)` stream over the series span. UP
    /// series yield `F * L` real entries; complex series stack real and
    /// imaginary parts blockwise into `2 * F * L` entries
    /// (`[Re(s_0..s_FL) | Im(s_0..s_FL)]`, stream index `f * L + l`).
    pub fn snapshot_vector(&self) -> Result<Vec<f64>> {
        let layout = self.layout();
        let link_pos = self.link_positions();
        let count = layout.stream_count();
        let mut acc = alloc::vec![Complex64::new(0.0, 0.0); count];
        let mut n = alloc::vec![0usize; count];
        for s in &self.samples {
            let idx = layout.stream_index(usize::from(s.freq_index), link_pos[&s.link_id]);
            acc[idx] += s.value;
            n[idx] += 1;
        }
        if n.iter().any(|&c| c == 0) {
            return Err(CoreError::invalid("samples", "empty stream in snapshot"));
        }
        let means: Vec<Complex64> = acc
            .iter()
            .zip(&n)
            .map(|(a, &c)| a / c as f64)
            .collect();
        if self.cqi_type.is_complex() {
            let mut out = Vec::with_capacity(2 * count);
            out.extend(means.iter().map(|c| c.re));
            out.extend(means.iter().map(|c| c.im));
            Ok(out)
        } else {
            Ok(means.iter().map(|c| c.re).collect())
        }
    }

    /// Dimension of [`snapshot_vector`](Self::snapshot_vector) output.
    pub fn snapshot_len(&self) -> usize {
        let streams = usize::from(self.freq_count) * self.link_ids.len();
        if self.cqi_type.is_complex() {
            2 * streams
        } else {
            streams
        }
    }

    /// New series containing only samples with `start_ms <= t < end_ms`.
    pub fn slice_time(&self, start_ms: i64, end_ms: i64) -> Result<CqiSeries> {
        let samples: Vec<CqiSample> = self
            .samples
            .iter()
            .filter(|s| s.time_ms >= start_ms && s.time_ms < end_ms)
            .copied()
            .collect();
        CqiSeries::new(
            self.device_id.clone(),
            self.cqi_type,
            self.sampling_ms,
            self.freq_count,
            self.link_ids.clone(),
            samples,
        )
    }

    pub(crate) fn with_samples(&self, samples: Vec<CqiSample>) -> Result<CqiSeries> {
        CqiSeries::new(
            self.device_id.clone(),
            self.cqi_type,
            self.sampling_ms,
            self.freq_count,
            self.link_ids.clone(),
            samples,
        )
    }
}

/// Stationary background statistics estimated during calibration.
///
/// One entry per `(freq, link)` stream, indexed `f * L + l`. The
/// background is modeled as time-stationary, so the per-index vectors
/// tile over the time dimension of whatever layout they calibrate.
/// `deviation` is the standard deviation of the background-subtracted
/// magnitude `|s - mean|` over the calibration span.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundProfile {
    pub freq_count: u16,
    pub link_ids: Vec<u32>,
    pub mean: Vec<Complex64>,
    pub deviation: Vec<f64>,
    /// Span `[start_ms, end_ms)` the profile was estimated over.
    pub calibration_window: (i64, i64),
}

impl BackgroundProfile {
    /// Estimate mean and deviation per stream from a calibration series.
    pub fn estimate(series: &CqiSeries) -> Result<Self> {
        let streams = series.streams();
        if streams.is_empty() {
            return Err(CoreError::Uncalibrated("empty calibration series".into()));
        }
        let layout = series.layout();
        let link_pos: BTreeMap<u32, usize> = series
            .link_ids
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        let count = layout.stream_count();
        let mut mean = alloc::vec![Complex64::new(0.0, 0.0); count];
        let mut deviation = alloc::vec![0.0f64; count];
        let mut seen = alloc::vec![false; count];
        for ((link, freq), vals) in &streams {
            let idx = layout.stream_index(usize::from(*freq), link_pos[link]);
            let n = vals.len() as f64;
            let m = vals.iter().map(|(_, v)| v).sum::<Complex64>() / n;
            let mags: Vec<f64> = vals.iter().map(|(_, v)| (v - m).norm()).collect();
            let mag_mean = mags.iter().sum::<f64>() / n;
            let var = mags.iter().map(|d| (d - mag_mean) * (d - mag_mean)).sum::<f64>() / n;
            mean[idx] = m;
            deviation[idx] = var.sqrt();
            seen[idx] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(CoreError::Uncalibrated(
                "calibration series does not cover every stream".into(),
            ));
        }
        let span = series.span().expect("non-empty");
        Ok(BackgroundProfile {
            freq_count: series.freq_count,
            link_ids: series.link_ids.clone(),
            mean,
            deviation,
            calibration_window: span,
        })
    }

    pub fn stream_count(&self) -> usize {
        usize::from(self.freq_count) * self.link_ids.len()
    }

    /// Checks the profile covers the streams of `series`.
    pub fn matches(&self, series: &CqiSeries) -> bool {
        self.freq_count == series.freq_count && self.link_ids == series.link_ids
    }

    /// Deviation of the stream-averaged background-subtracted magnitude,
    /// assuming independent streams: `sqrt(sum(dev_v^2)) / S`.
    pub fn aggregate_deviation(&self) -> f64 {
        let s = self.stream_count() as f64;
        (self.deviation.iter().map(|d| d * d).sum::<f64>()).sqrt() / s
    }
}

/// The kind of latent process a sensing task infers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Detection,
    Localization,
    Activity,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Detection => "detection",
            TaskType::Localization => "localization",
            TaskType::Activity => "activity",
        }
    }
}

impl core::fmt::Display for TaskType {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feature pipeline variant a gateway runs for a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureRecipe {
    /// Subspace projection only.
    #[serde(rename = "PCA")]
    Pca,
    /// Subspace projection plus peak and subcarrier phase statistics.
    #[serde(rename = "PCA_PEAK_PHASE")]
    PcaPeakPhase,
}

/// Over-the-air reconfiguration profile applied to field devices when a
/// task starts or changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtaProfile {
    /// Active links covering the detection area.
    pub neighborhood_links: Vec<u32>,
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    /// Subcarrier count per OFDM symbol; 1 for scalar interfaces.
    #[serde(default = "one_subcarrier")]
    pub subcarriers: u16,
    /// Interval between consecutive radio transmissions.
    pub duty_cycle_ms: u32,
    pub cqi_type: CqiType,
    /// CQI sampling interval; at most one sample per transmission.
    pub cqi_sampling_ms: u32,
}

fn one_subcarrier() -> u16 {
    1
}

impl OtaProfile {
    pub fn validate(&self) -> Result<()> {
        if self.duty_cycle_ms == 0 {
            return Err(CoreError::invalid("duty_cycle_ms", "must be positive"));
        }
        if self.subcarriers == 0 {
            return Err(CoreError::invalid("subcarriers", "must be >= 1"));
        }
        if self.cqi_type.is_complex() && self.subcarriers < 2 {
            return Err(CoreError::invalid(
                "subcarriers",
                "complex CQI needs at least 2 subcarriers",
            ));
        }
        if self.cqi_sampling_ms < self.duty_cycle_ms {
            return Err(CoreError::invalid(
                "cqi_sampling_ms",
                "must be >= duty_cycle_ms",
            ));
        }
        Ok(())
    }
}

const PRIOR_SUM_TOL: f64 = 1e-9;

/// A configured sensing task: the latent domain, its priors, and the
/// feature pipeline that serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingTask {
    pub task_id: String,
    pub task_type: TaskType,
    /// Ordered latent labels; index in this list is the class index k.
    pub latent_labels: Vec<String>,
    /// Prior probability per label, aligned with `latent_labels`.
    pub priors: Vec<f64>,
    pub feature_recipe: FeatureRecipe,
    /// Fixed component count; exclusive with `eigenvalue_threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_components: Option<usize>,
    /// Eigenvalue threshold h; exclusive with `num_components`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalue_threshold: Option<f64>,
    pub window_ms: u32,
    /// Window advance; defaults to `window_ms` (non-overlapping).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_ms: Option<u32>,
    pub cqi_type: CqiType,
    pub ota_profile: OtaProfile,
    /// How evidence from multiple gateways combines in the mixture.
    #[serde(default)]
    pub gateway_combine: crate::inference::GatewayCombine,
}

impl SensingTask {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(CoreError::invalid("task_id", "empty"));
        }
        if self.latent_labels.len() < 2 {
            return Err(CoreError::invalid("latent_labels", "need at least 2 labels"));
        }
        if self.priors.len() != self.latent_labels.len() {
            return Err(CoreError::dims(
                self.latent_labels.len(),
                self.priors.len(),
                "priors",
            ));
        }
        if self.priors.iter().any(|&a| !(0.0..=1.0).contains(&a) || !a.is_finite()) {
            return Err(CoreError::invalid("priors", "entries must lie in [0, 1]"));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(CoreError::invalid("priors", "must sum to 1"));
        }
        match (self.num_components, self.eigenvalue_threshold) {
            (Some(p), None) if p >= 1 => {}
            (None, Some(h)) if h.is_finite() => {}
            (Some(0), _) => return Err(CoreError::invalid("num_components", "must be >= 1")),
            _ => {
                return Err(CoreError::invalid(
                    "component selection",
                    "exactly one of num_components / eigenvalue_threshold required",
                ))
            }
        }
        if self.task_type == TaskType::Detection && self.latent_labels.len() != 2 {
            return Err(CoreError::invalid("latent_labels", "detection tasks are binary"));
        }
        if self.window_ms == 0 {
            return Err(CoreError::invalid("window_ms", "must be positive"));
        }
        if self.hop_ms == Some(0) {
            return Err(CoreError::invalid("hop_ms", "must be positive"));
        }
        self.ota_profile.validate()
    }

    pub fn hop_ms(&self) -> u32 {
        self.hop_ms.unwrap_or(self.window_ms)
    }

    pub fn class_count(&self) -> usize {
        self.latent_labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.latent_labels.iter().position(|l| l == label)
    }
}

/// Rectangle in meters, origin at the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] <= self.x + self.width && p[1] >= self.y && p[1] <= self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayDescriptor {
    pub gw_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind_addr: Option<String>,
    /// Raw-sample cache capacity per link.
    pub cache_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub device_id: String,
    /// 2-D position in meters.
    pub position: [f64; 2],
}

/// A directed physical link between two declared devices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub tx_device: String,
    pub rx_device: String,
}

/// Static description of a deployment: gateways, field devices, links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub gateways: Vec<GatewayDescriptor>,
    pub devices: Vec<DeviceDescriptor>,
    pub area: Area,
    pub links: Vec<LinkSpec>,
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gateways.is_empty() {
            return Err(CoreError::invalid("gateways", "need at least one gateway"));
        }
        if self.devices.len() < 2 {
            return Err(CoreError::invalid("devices", "need at least two devices"));
        }
        for link in &self.links {
            for end in [&link.tx_device, &link.rx_device] {
                if !self.devices.iter().any(|d| &d.device_id == end) {
                    return Err(CoreError::invalid("links", "endpoint references unknown device"));
                }
            }
        }
        Ok(())
    }

    pub fn device_position(&self, id: &str) -> Option<[f64; 2]> {
        self.devices
            .iter()
            .find(|d| d.device_id == id)
            .map(|d| d.position)
    }
}

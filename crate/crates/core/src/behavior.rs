//! Behavior features for activity recognition: peak statistics of the
//! projected signal and OFDM subcarrier phase-difference deviations.
//!
//! Arm-scale movements produce many narrow peaks in the dominant
//! subspace component and compress the subcarrier phase spread; head
//! movements produce one wide lobe and widespread phase deviation.
//! These two statistics, appended to the subspace features, are what
//! separates the activity classes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;

use crate::cqi::{wrap_angle, CqiSeries};
use crate::error::CoreError;
use crate::pca::PcaModel;
use crate::Result;

/// Peak statistics of a real-valued signal; inverted peaks are minima
/// detected on the negated signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakStats {
    pub regular_count: usize,
    pub inverted_count: usize,
    pub mean_peak_width_ms: f64,
    pub mean_inverted_peak_width_ms: f64,
}

impl PeakStats {
    /// Total count, regular plus inverted.
    pub fn peak_count(&self) -> usize {
        self.regular_count + self.inverted_count
    }
}

/// Detection parameters for [`detect_peaks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    /// Minimum prominence: height above the higher of the two flanking
    /// minima separating the peak from higher terrain.
    pub prominence: f64,
    /// Minimum width at half prominence, in milliseconds.
    pub min_width_ms: f64,
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    width_ms: f64,
}

/// Sample position where `signal` falls to `reference` left of peak `p`.
fn left_crossing(signal: &[f64], p: usize, reference: f64) -> f64 {
    let mut i = p;
    while i > 0 {
        i -= 1;
        if signal[i] <= reference {
            let frac = (signal[i + 1] - reference) / (signal[i + 1] - signal[i]);
            return (i + 1) as f64 - frac;
        }
    }
    0.0
}

/// Sample position where `signal` falls to `reference` right of peak `p`.
fn right_crossing(signal: &[f64], p: usize, reference: f64) -> f64 {
    let n = signal.len();
    let mut i = p;
    while i + 1 < n {
        i += 1;
        if signal[i] <= reference {
            let frac = (signal[i - 1] - reference) / (signal[i - 1] - signal[i]);
            return (i - 1) as f64 + frac;
        }
    }
    (n - 1) as f64
}

/// Local maxima of `signal`; plateaus collapse to their midpoint.
fn local_maxima(signal: &[f64]) -> Vec<usize> {
    let n = signal.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if signal[i] > signal[i - 1] {
            // scan over a possible plateau
            let start = i;
            let mut j = i;
            while j + 1 < n && signal[j + 1] == signal[j] {
                j += 1;
            }
            if j + 1 < n && signal[j + 1] < signal[j] {
                out.push((start + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn detect_one_side(signal: &[f64], sample_ms: u32, cfg: &PeakConfig) -> Vec<Peak> {
    let n = signal.len();
    let mut peaks = Vec::new();
    for p in local_maxima(signal) {
        let height = signal[p];
        // walk left until terrain rises above the peak
        let mut left_min = height;
        let mut i = p;
        while i > 0 {
            i -= 1;
            if signal[i] > height {
                break;
            }
            if signal[i] < left_min {
                left_min = signal[i];
            }
        }
        let mut right_min = height;
        let mut i = p;
        while i + 1 < n {
            i += 1;
            if signal[i] > height {
                break;
            }
            if signal[i] < right_min {
                right_min = signal[i];
            }
        }
        let prominence = height - left_min.max(right_min);
        if prominence < cfg.prominence {
            continue;
        }
        // width at half prominence with linear interpolation
        let reference = height - 0.5 * prominence;
        let left_pos = left_crossing(signal, p, reference);
        let right_pos = right_crossing(signal, p, reference);
        let width_ms = (right_pos - left_pos) * f64::from(sample_ms);
        if width_ms < cfg.min_width_ms {
            continue;
        }
        peaks.push(Peak { width_ms });
    }
    peaks
}

/// Count peaks and inverted peaks of a signal and measure their mean
/// width at half prominence.
pub fn detect_peaks(signal: &[f64], sample_ms: u32, cfg: &PeakConfig) -> Result<PeakStats> {
    if signal.len() < 3 {
        return Err(CoreError::invalid("signal", "need at least 3 samples"));
    }
    if !(cfg.prominence > 0.0) {
        return Err(CoreError::invalid("prominence", "must be positive"));
    }
    let regular = detect_one_side(signal, sample_ms, cfg);
    let negated: Vec<f64> = signal.iter().map(|x| -x).collect();
    let inverted = detect_one_side(&negated, sample_ms, cfg);
    let mean = |peaks: &[Peak]| {
        if peaks.is_empty() {
            0.0
        } else {
            peaks.iter().map(|p| p.width_ms).sum::<f64>() / peaks.len() as f64
        }
    };
    Ok(PeakStats {
        regular_count: regular.len(),
        inverted_count: inverted.len(),
        mean_peak_width_ms: mean(&regular),
        mean_inverted_peak_width_ms: mean(&inverted),
    })
}

/// Subcarrier phase-difference deviation statistics.
///
/// For each link and time, `sigma[t]` is the standard deviation over
/// the adjacent-subcarrier phase differences (wrapped to `(-pi, pi]`)
/// of that OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDeviationStats {
    /// Per-link deviation time series, time-ascending.
    pub per_link: BTreeMap<u32, Vec<(i64, f64)>>,
    /// Mean of sigma over every (time, link).
    pub mean_dev: f64,
    /// Minimum of sigma over every (time, link).
    pub min_dev: f64,
}

/// Compute the per-symbol deviation of adjacent-subcarrier phase
/// differences for a phase-corrected complex series.
pub fn phase_deviation(series: &CqiSeries) -> Result<PhaseDeviationStats> {
    if !series.cqi_type.is_complex() {
        return Err(CoreError::PhaseUndefined(series.cqi_type.as_str().into()));
    }
    if series.freq_count < 2 {
        return Err(CoreError::PhaseDifferenceUndefined(series.freq_count));
    }
    let mut symbols: BTreeMap<(u32, i64), Vec<(u16, f64)>> = BTreeMap::new();
    for s in series.samples() {
        symbols
            .entry((s.link_id, s.time_ms))
            .or_default()
            .push((s.freq_index, s.value.arg()));
    }
    let mut per_link: BTreeMap<u32, Vec<(i64, f64)>> = BTreeMap::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut min_dev = f64::INFINITY;
    for ((link, time), mut phases) in symbols {
        if phases.len() < 2 {
            continue;
        }
        phases.sort_by_key(|(f, _)| *f);
        let diffs: Vec<f64> = phases
            .windows(2)
            .map(|w| wrap_angle(w[1].1 - w[0].1))
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let sigma = var.sqrt();
        per_link.entry(link).or_default().push((time, sigma));
        sum += sigma;
        count += 1;
        if sigma < min_dev {
            min_dev = sigma;
        }
    }
    if count == 0 {
        return Err(CoreError::invalid("series", "no symbols with >= 2 subcarriers"));
    }
    Ok(PhaseDeviationStats {
        per_link,
        mean_dev: sum / count as f64,
        min_dev,
    })
}

/// The feature vector presented to activity inference: subspace
/// features plus peak and phase statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorFeatureVector {
    pub pca_features: Vec<f64>,
    pub peaks: PeakStats,
    pub phase_dev_mean: f64,
    pub phase_dev_min: f64,
}

impl BehaviorFeatureVector {
    /// Flatten to `P + 5` entries:
    /// `[pca.. | peak_count | peak_width | inv_peak_width | phase_mean | phase_min]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.pca_features.clone();
        v.push(self.peaks.peak_count() as f64);
        v.push(self.peaks.mean_peak_width_ms);
        v.push(self.peaks.mean_inverted_peak_width_ms);
        v.push(self.phase_dev_mean);
        v.push(self.phase_dev_min);
        v
    }
}

/// Assemble the behavior features of one segmented activity series.
///
/// Peak analysis runs on the first-component time projection of the
/// segment; phase analysis runs on the raw (phase-corrected) segment.
pub fn build_behavior_features(
    segment: &CqiSeries,
    model: &PcaModel,
    peak_cfg: &PeakConfig,
) -> Result<BehaviorFeatureVector> {
    let pca_features = model.project_series(segment)?;
    let component: Vec<f64> = model
        .component_series(segment, 0)?
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    let peaks = detect_peaks(&component, segment.sampling_ms, peak_cfg)?;
    let phase = phase_deviation(segment)?;
    Ok(BehaviorFeatureVector {
        pca_features,
        peaks,
        phase_dev_mean: phase.mean_dev,
        phase_dev_min: phase.min_dev,
    })
}

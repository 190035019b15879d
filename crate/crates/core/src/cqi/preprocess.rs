//! Edge-side pre-manipulation of raw CQI: interpolation of missing
//! packets, CSI phase correction, and impulsive-noise removal.
//!
//! The pipeline order is fixed: interpolate, phase-correct (complex
//! types), denoise, then segment.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;

use crate::cqi::types::{CqiSample, CqiSeries};
use crate::error::CoreError;
use crate::Result;

const TAU: f64 = 2.0 * core::f64::consts::PI;

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    x - TAU * ((x - core::f64::consts::PI) / TAU).ceil()
}

/// Unwrap a phase sequence: each step is adjusted by multiples of 2*pi
/// so that consecutive jumps stay within `(-pi, pi]`.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut prev = match phases.first() {
        Some(&p) => p,
        None => return out,
    };
    out.push(prev);
    for &p in &phases[1..] {
        let unwrapped = prev + wrap_angle(p - prev);
        out.push(unwrapped);
        prev = unwrapped;
    }
    out
}

/// Least-squares fit of `phi_m ~ slope * m + intercept` over subcarrier
/// indices `m = 0..F-1`. Returns `(slope, intercept)`.
pub fn fit_phase_ramp(unwrapped: &[f64]) -> (f64, f64) {
    let n = unwrapped.len() as f64;
    if unwrapped.len() < 2 {
        return (0.0, unwrapped.first().copied().unwrap_or(0.0));
    }
    let mean_m = (n - 1.0) / 2.0;
    let mean_phi = unwrapped.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, &phi) in unwrapped.iter().enumerate() {
        let dm = m as f64 - mean_m;
        num += dm * (phi - mean_phi);
        den += dm * dm;
    }
    let slope = num / den;
    (slope, mean_phi - slope * mean_m)
}

/// Fill per-stream gaps by linear interpolation onto the uniform grid
/// implied by `sampling_ms`.
///
/// The grid of each stream is anchored at its first sample; original
/// samples that fall on the grid are preserved exactly. Complex values
/// interpolate component-wise in rectangular coordinates.
pub fn interpolate_missing(series: &CqiSeries) -> Result<CqiSeries> {
    let step = i64::from(series.sampling_ms);
    let mut out: Vec<CqiSample> = Vec::with_capacity(series.len());
    for ((link_id, freq_index), vals) in series.streams() {
        if vals.len() < 2 {
            return Err(CoreError::InsufficientStream {
                freq_index,
                link_id,
                got: vals.len(),
                need: 2,
            });
        }
        let t0 = vals[0].0;
        let t_last = vals[vals.len() - 1].0;
        let mut right = 0usize; // first sample with time >= grid point
        let mut t = t0;
        while t <= t_last {
            while vals[right].0 < t {
                right += 1;
            }
            let (tr, vr) = vals[right];
            let value = if tr == t {
                vr
            } else {
                let (tl, vl) = vals[right - 1];
                let alpha = (t - tl) as f64 / (tr - tl) as f64;
                vl + (vr - vl) * alpha
            };
            out.push(CqiSample {
                time_ms: t,
                freq_index,
                link_id,
                cqi_type: series.cqi_type,
                value,
            });
            t += step;
        }
    }
    series.with_samples(out)
}

/// Remove the per-symbol linear phase ramp and constant offset from
/// complex CQI.
///
/// For every `(link, time)` OFDM symbol the subcarrier phases are
/// unwrapped across the frequency axis and a least-squares line in the
/// subcarrier index is subtracted. Magnitudes are untouched.
pub fn correct_phase(series: &CqiSeries) -> Result<CqiSeries> {
    if !series.cqi_type.is_complex() {
        return Err(CoreError::PhaseUndefined(series.cqi_type.as_str().into()));
    }
    // group samples per (link, time) symbol
    let mut symbols: BTreeMap<(u32, i64), Vec<(u16, Complex64)>> = BTreeMap::new();
    for s in series.samples() {
        symbols
            .entry((s.link_id, s.time_ms))
            .or_default()
            .push((s.freq_index, s.value));
    }
    let mut out = Vec::with_capacity(series.len());
    for ((link_id, time_ms), mut sub) in symbols {
        sub.sort_by_key(|(f, _)| *f);
        let phases: Vec<f64> = sub.iter().map(|(_, v)| v.arg()).collect();
        let unwrapped = unwrap_phases(&phases);
        let (slope, intercept) = fit_phase_ramp(&unwrapped);
        for (i, (freq_index, v)) in sub.into_iter().enumerate() {
            let corrected = unwrapped[i] - slope * i as f64 - intercept;
            out.push(CqiSample {
                time_ms,
                freq_index,
                link_id,
                cqi_type: series.cqi_type,
                value: Complex64::from_polar(v.norm(), corrected),
            });
        }
    }
    series.with_samples(out)
}

fn median_inplace(buf: &mut [f64]) -> f64 {
    buf.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    buf[buf.len() / 2]
}

/// Per-stream centered moving median of odd length `window_len`.
///
/// Windows shrink symmetrically near the edges so they always stay
/// centered and odd. A median rejects the impulsive PPDU-level outliers
/// a moving mean would smear. Complex values take the median per
/// component.
pub fn denoise(series: &CqiSeries, window_len: usize) -> Result<CqiSeries> {
    if window_len < 1 || window_len % 2 == 0 {
        return Err(CoreError::invalid("window_len", "must be odd and >= 1"));
    }
    let half = window_len / 2;
    let mut out = Vec::with_capacity(series.len());
    for ((link_id, freq_index), vals) in series.streams() {
        let n = vals.len();
        let mut re_buf: Vec<f64> = Vec::with_capacity(window_len);
        let mut im_buf: Vec<f64> = Vec::with_capacity(window_len);
        for i in 0..n {
            let h = half.min(i).min(n - 1 - i);
            re_buf.clear();
            im_buf.clear();
            for (_, v) in &vals[i - h..=i + h] {
                re_buf.push(v.re);
                im_buf.push(v.im);
            }
            let value = Complex64::new(median_inplace(&mut re_buf), median_inplace(&mut im_buf));
            out.push(CqiSample {
                time_ms: vals[i].0,
                freq_index,
                link_id,
                cqi_type: series.cqi_type,
                value,
            });
        }
    }
    series.with_samples(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqi::types::{CqiSample, CqiSeries, CqiType};
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn up_series(stream: &[(i64, f64)], sampling_ms: u32) -> CqiSeries {
        let samples = stream
            .iter()
            .map(|&(t, v)| CqiSample {
                time_ms: t,
                freq_index: 0,
                link_id: 0,
                cqi_type: CqiType::Up,
                value: Complex64::new(v, 0.0),
            })
            .collect();
        CqiSeries::new("d0", CqiType::Up, sampling_ms, 1, vec![0], samples).unwrap()
    }

    #[test]
    fn interpolate_fills_linear_midpoint() {
        let s = up_series(&[(0, 1.0), (120, 3.0)], 60);
        let r = interpolate_missing(&s).unwrap();
        let vals: Vec<(i64, f64)> = r.samples().iter().map(|s| (s.time_ms, s.value.re)).collect();
        assert_eq!(vals, vec![(0, 1.0), (60, 2.0), (120, 3.0)]);
    }

    #[test]
    fn interpolate_identity_on_uniform_stream() {
        let s = up_series(&[(0, 1.0), (60, 4.0), (120, 2.0)], 60);
        let r = interpolate_missing(&s).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn interpolate_is_idempotent() {
        let s = up_series(&[(0, 1.0), (40, 1.5), (120, 3.0), (300, -2.0)], 60);
        let once = interpolate_missing(&s).unwrap();
        let twice = interpolate_missing(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn interpolate_rejects_short_stream() {
        let s = up_series(&[(0, 1.0)], 60);
        assert!(matches!(
            interpolate_missing(&s),
            Err(CoreError::InsufficientStream { .. })
        ));
    }

    fn csi_symbol(phases: &[f64]) -> CqiSeries {
        let samples = phases
            .iter()
            .enumerate()
            .map(|(m, &p)| CqiSample {
                time_ms: 0,
                freq_index: m as u16,
                link_id: 0,
                cqi_type: CqiType::Phy,
                value: Complex64::from_polar(2.0, p),
            })
            .collect();
        CqiSeries::new("d0", CqiType::Phy, 60, phases.len() as u16, vec![0], samples).unwrap()
    }

    #[test]
    fn phase_ramp_is_removed_exactly() {
        let a = 0.21;
        let b = -0.7;
        let phases: Vec<f64> = (0..16).map(|m| wrap_angle(a * m as f64 + b)).collect();
        let s = csi_symbol(&phases);
        let r = correct_phase(&s).unwrap();
        for smp in r.samples() {
            assert_abs_diff_eq!(smp.value.arg(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(smp.value.norm(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unwrap_reduces_jumps() {
        let wrapped: Vec<f64> = [0.1, 0.1 + TAU, 0.1 + 2.0 * TAU]
            .iter()
            .map(|&p| wrap_angle(p))
            .collect();
        let un = unwrap_phases(&wrapped);
        for &p in &un {
            assert_abs_diff_eq!(p, 0.1, epsilon = 1e-12);
        }
        let s = csi_symbol(&wrapped);
        let r = correct_phase(&s).unwrap();
        for smp in r.samples() {
            assert_abs_diff_eq!(smp.value.arg(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_correction_rejects_real_series() {
        let s = up_series(&[(0, 1.0), (60, 2.0)], 60);
        assert!(matches!(correct_phase(&s), Err(CoreError::PhaseUndefined(_))));
    }

    #[test]
    fn ramp_fit_recovers_slope() {
        let phases: Vec<f64> = (0..30).map(|m| 0.21 * m as f64 + 1.3).collect();
        let (slope, intercept) = fit_phase_ramp(&phases);
        assert_abs_diff_eq!(slope, 0.21, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn denoise_window_one_is_identity() {
        let s = up_series(&[(0, 1.0), (60, 9.0), (120, 2.0)], 60);
        assert_eq!(denoise(&s, 1).unwrap(), s);
    }

    #[test]
    fn denoise_rejects_spike() {
        let s = up_series(&[(0, 1.0), (60, 1.0), (120, 9.0), (180, 1.0), (240, 1.0)], 60);
        let r = denoise(&s, 3).unwrap();
        let vals: Vec<f64> = r.samples().iter().map(|s| s.value.re).collect();
        assert_eq!(vals, vec![1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn denoise_rejects_even_window() {
        let s = up_series(&[(0, 1.0), (60, 2.0)], 60);
        assert!(denoise(&s, 2).is_err());
        assert!(denoise(&s, 0).is_err());
    }
}

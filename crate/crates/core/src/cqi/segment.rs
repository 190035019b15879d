//! Windowing and activity segmentation of calibrated CQI series.

use alloc::vec::Vec;

#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;

use crate::cqi::types::{BackgroundProfile, CqiSeries};
use crate::error::CoreError;
use crate::Result;

/// Default multiplier on the calibration deviation for segment onsets.
pub const DEFAULT_THRESHOLD_MULT: f64 = 3.0;

/// Cut a series into windows of `window_ms` advanced by `hop_ms`.
///
/// Only full windows are returned; a trailing partial window is
/// dropped. Windows are half-open `[start, start + window_ms)`.
pub fn window(series: &CqiSeries, window_ms: u32, hop_ms: u32) -> Result<Vec<CqiSeries>> {
    if window_ms < series.sampling_ms {
        return Err(CoreError::invalid("window_ms", "shorter than the sampling interval"));
    }
    if hop_ms < 1 {
        return Err(CoreError::invalid("hop_ms", "must be >= 1"));
    }
    let Some((start, end)) = series.span() else {
        return Ok(Vec::new());
    };
    let span = end - start;
    let window_ms = i64::from(window_ms);
    let hop_ms = i64::from(hop_ms);
    if span < window_ms {
        return Ok(Vec::new());
    }
    let count = (span - window_ms) / hop_ms + 1;
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        let w_start = start + k * hop_ms;
        out.push(series.slice_time(w_start, w_start + window_ms)?);
    }
    Ok(out)
}

/// Per-timestamp mean background-subtracted magnitude.
///
/// For each time `t`, averages `|s_{v,t} - mean_v|` over every stream
/// the profile covers. Returns `(times, magnitudes)`.
pub fn alteration_signal(series: &CqiSeries, profile: &BackgroundProfile) -> Result<(Vec<i64>, Vec<f64>)> {
    if !profile.matches(series) {
        return Err(CoreError::Uncalibrated(
            "profile layout does not match series".into(),
        ));
    }
    let layout = series.layout();
    let link_pos: alloc::collections::BTreeMap<u32, usize> = series
        .link_ids
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();
    let times = series.times();
    let time_pos: alloc::collections::BTreeMap<i64, usize> =
        times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut acc = alloc::vec![0.0f64; times.len()];
    let mut counts = alloc::vec![0usize; times.len()];
    for s in series.samples() {
        let v = layout.stream_index(usize::from(s.freq_index), link_pos[&s.link_id]);
        let ti = time_pos[&s.time_ms];
        acc[ti] += (s.value - profile.mean[v]).norm();
        counts[ti] += 1;
    }
    let magnitudes = acc
        .iter()
        .zip(&counts)
        .map(|(a, &c)| if c > 0 { a / c as f64 } else { 0.0 })
        .collect();
    Ok((times, magnitudes))
}

fn moving_std(times: &[i64], values: &[f64], window_ms: i64) -> Vec<f64> {
    let n = values.len();
    let half = window_ms / 2;
    let mut out = alloc::vec![0.0f64; n];
    let mut lo = 0usize;
    let mut hi = 0usize;
    for i in 0..n {
        let t = times[i];
        while lo < n && times[lo] < t - half {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < n && times[hi] <= t + half {
            hi += 1;
        }
        let w = &values[lo..hi];
        let m = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / w.len() as f64;
        out[i] = var.sqrt();
    }
    out
}

/// Detect time segments where the channel deviates from the calibrated
/// background.
///
/// The moving standard deviation (window `window_ms`) of the
/// background-subtracted magnitude is compared against
/// `threshold_mult` times the calibration-period deviation; runs above
/// the threshold become segments, and segments separated by less than
/// one window are merged.
pub fn segment_activity(
    series: &CqiSeries,
    profile: &BackgroundProfile,
    window_ms: u32,
    threshold_mult: f64,
) -> Result<Vec<(i64, i64)>> {
    if threshold_mult <= 0.0 {
        return Err(CoreError::invalid("threshold_mult", "must be positive"));
    }
    let (times, magnitudes) = alteration_signal(series, profile)?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let sigma = moving_std(&times, &magnitudes, i64::from(window_ms));
    let threshold = threshold_mult * profile.aggregate_deviation();
    let mut segments: Vec<(i64, i64)> = Vec::new();
    let mut open: Option<i64> = None;
    for (i, &s) in sigma.iter().enumerate() {
        if s > threshold {
            if open.is_none() {
                open = Some(times[i]);
            }
        } else if let Some(start) = open.take() {
            segments.push((start, times[i]));
        }
    }
    if let Some(start) = open {
        segments.push((start, times[times.len() - 1] + i64::from(series.sampling_ms)));
    }
    // merge segments closer than one window
    let gap = i64::from(window_ms);
    let mut merged: Vec<(i64, i64)> = Vec::with_capacity(segments.len());
    for seg in segments {
        match merged.last_mut() {
            Some(last) if seg.0 - last.1 < gap => last.1 = seg.1,
            _ => merged.push(seg),
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqi::types::{CqiSample, CqiType};
    use alloc::vec;
    use num_complex::Complex64;

    fn series_from_fn(n: usize, sampling: u32, f: impl Fn(usize) -> f64) -> CqiSeries {
        let samples = (0..n)
            .map(|i| CqiSample {
                time_ms: i as i64 * i64::from(sampling),
                freq_index: 0,
                link_id: 7,
                cqi_type: CqiType::Up,
                value: Complex64::new(f(i), 0.0),
            })
            .collect();
        CqiSeries::new("d0", CqiType::Up, sampling, 1, vec![7], samples).unwrap()
    }

    // deterministic “noise” with zero structure, fixed amplitude
    fn wobble(i: usize) -> f64 {
        match i % 4 {
            0 => 0.1,
            1 => -0.1,
            2 => 0.05,
            _ => -0.05,
        }
    }

    #[test]
    fn window_counts_match_spans() {
        let s = series_from_fn(10, 60, |_| 0.0); // spans [0, 600)
        assert_eq!(window(&s, 600, 600).unwrap().len(), 1);
        assert_eq!(window(&s, 300, 150).unwrap().len(), 3);
        // hop > window: gaps allowed, count = floor((span-window)/hop)+1
        assert_eq!(window(&s, 120, 240).unwrap().len(), 3);
    }

    #[test]
    fn window_respects_sample_membership() {
        let s = series_from_fn(10, 60, |i| i as f64);
        let ws = window(&s, 300, 300).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].len(), 5);
        assert_eq!(ws[1].len(), 5);
        assert_eq!(ws[1].samples()[0].time_ms, 300);
    }

    #[test]
    fn background_replay_yields_no_segments() {
        let calib = series_from_fn(100, 60, wobble);
        let profile = BackgroundProfile::estimate(&calib).unwrap();
        let replay = series_from_fn(100, 60, wobble);
        let segs = segment_activity(&replay, &profile, 600, 3.0).unwrap();
        assert!(segs.is_empty(), "got {segs:?}");
    }

    #[test]
    fn burst_produces_one_covering_segment() {
        let calib = series_from_fn(200, 60, wobble);
        let profile = BackgroundProfile::estimate(&calib).unwrap();
        let sigma = profile.aggregate_deviation();
        // oscillating burst of amplitude 10 sigma over [2040, 3000) ms
        let burst = |i: usize| {
            let t = i as i64 * 60;
            let mut v = wobble(i);
            if (2040..3000).contains(&t) {
                v += 10.0 * sigma * if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            v
        };
        let replay = series_from_fn(100, 60, burst);
        let segs = segment_activity(&replay, &profile, 600, 3.0).unwrap();
        assert_eq!(segs.len(), 1, "got {segs:?}");
        let (a, b) = segs[0];
        assert!(a <= 2040 && b >= 3000, "segment {segs:?} must cover the burst");
        assert!(a >= 2040 - 600 && b <= 3000 + 600, "segment {segs:?} within one window");
    }

    #[test]
    fn nearby_bursts_merge() {
        let calib = series_from_fn(300, 60, wobble);
        let profile = BackgroundProfile::estimate(&calib).unwrap();
        let sigma = profile.aggregate_deviation();
        let burst = |i: usize| {
            let t = i as i64 * 60;
            let mut v = wobble(i);
            if (1200..1800).contains(&t) || (2100..2700).contains(&t) {
                v += 10.0 * sigma * if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            v
        };
        let replay = series_from_fn(120, 60, burst);
        let segs = segment_activity(&replay, &profile, 600, 3.0).unwrap();
        assert_eq!(segs.len(), 1, "bursts 300ms apart with 600ms window must merge: {segs:?}");
    }

    #[test]
    fn segmentation_requires_matching_profile() {
        let calib = series_from_fn(10, 60, wobble);
        let profile = BackgroundProfile::estimate(&calib).unwrap();
        let other = CqiSeries::new(
            "d0",
            CqiType::Up,
            60,
            1,
            vec![9],
            vec![CqiSample {
                time_ms: 0,
                freq_index: 0,
                link_id: 9,
                cqi_type: CqiType::Up,
                value: Complex64::new(0.0, 0.0),
            }],
        )
        .unwrap();
        assert!(matches!(
            segment_activity(&other, &profile, 600, 3.0),
            Err(CoreError::Uncalibrated(_))
        ));
    }

    #[test]
    fn boundaries_translate_with_flanking_background() {
        let make = |lead: usize| {
            let sigma_burst = |i: usize, lead: usize| {
                let mut v = wobble(i);
                if (lead..lead + 10).contains(&i) {
                    v += 3.0 * if i % 2 == 0 { 1.0 } else { -1.0 };
                }
                v
            };
            series_from_fn(lead + 40, 60, move |i| sigma_burst(i, lead))
        };
        let calib = series_from_fn(200, 60, wobble);
        let profile = BackgroundProfile::estimate(&calib).unwrap();
        let a = segment_activity(&make(20), &profile, 600, 3.0).unwrap();
        let b = segment_activity(&make(35), &profile, 600, 3.0).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
        let shift = (35 - 20) * 60;
        assert!((b[0].0 - a[0].0 - shift).abs() <= 600);
        assert!((b[0].1 - a[0].1 - shift).abs() <= 600);
    }
}

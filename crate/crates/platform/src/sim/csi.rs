//! Discrete multipath CSI model.
//!
//! Per link and time the channel is a sum over paths
//! `H(f) = sum_p a_p * exp(-j 2 pi f tau_p)`: a unit line-of-sight
//! path, a seeded set of static scatterers, plus one moving scatterer
//! per active target. Head turns sweep the scatterer delay slowly
//! (spreading phase across subcarriers); arm movements pulse the
//! scatterer gain in multiple lobes (spiking the dominant component).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use radiosense_core::cqi::{CqiType, SensingTask};

use crate::trace::TraceRow;
use crate::{PlatformError, Result};

use super::{distance, excess_path, label_seed, Scene, Target, SPEED_OF_LIGHT};

struct StaticPath {
    amp: Complex64,
    delay_s: f64,
}

fn static_paths(scene: &Scene, link_id: u32, los_delay: f64) -> Vec<StaticPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(label_seed(
        scene.environment_seed,
        &format!("static-paths-{link_id}"),
    ));
    let p = &scene.csi;
    let mut paths = vec![StaticPath { amp: Complex64::new(p.los_gain, 0.0), delay_s: los_delay }];
    for _ in 0..p.static_scatterers {
        let gain = p.los_gain * p.static_gain * rng.random_range(0.3..1.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let excess_ns = rng.random_range(1.0..p.static_excess_ns.max(1.5));
        paths.push(StaticPath {
            amp: Complex64::from_polar(gain, phase),
            delay_s: los_delay + excess_ns * 1e-9,
        });
    }
    paths
}

/// Contribution of one target on one link at time `t`, as (amp, delay).
fn target_path(
    scene: &Scene,
    target: &Target,
    tx: [f64; 2],
    rx: [f64; 2],
    los_delay: f64,
    t_ms: i64,
) -> Option<(Complex64, f64)> {
    let p = &scene.csi;
    match target {
        Target::Trajectory { .. } => {
            let pos = target.position_at(t_ms)?;
            let excess_m = excess_path(tx, rx, pos).max(0.0);
            let gain = p.los_gain * p.target_gain / (1.0 + excess_m).powi(2);
            let delay = los_delay + excess_m / SPEED_OF_LIGHT;
            Some((Complex64::new(gain, 0.0), delay))
        }
        Target::Activity { position, .. } => {
            let (label, interval) = target.activity_at(t_ms)?;
            let excess_m = excess_path(tx, rx, *position).max(0.0);
            let base_delay = los_delay + excess_m / SPEED_OF_LIGHT;
            let t_s = (t_ms - interval.start_ms) as f64 / 1000.0;
            match label {
                "head" => {
                    let sweep = (std::f64::consts::TAU * 0.5 * t_s).sin();
                    let delay = base_delay + p.head_delay_ns * 1e-9 * (0.5 + 0.5 * sweep);
                    Some((Complex64::new(p.los_gain * p.head_gain, 0.0), delay))
                }
                "arm" => {
                    let lobe = (std::f64::consts::TAU * p.arm_rate_hz * t_s).sin().abs();
                    let delay = base_delay + p.arm_delay_ns * 1e-9;
                    Some((Complex64::new(p.los_gain * p.arm_gain * lobe, 0.0), delay))
                }
                other => {
                    // unknown scripted label behaves as a static body
                    let _ = other;
                    Some((Complex64::new(p.los_gain * p.head_gain, 0.0), base_delay))
                }
            }
        }
    }
}

/// Channel response at one subcarrier, noise-free.
pub fn channel_response(paths: &[(Complex64, f64)], freq_hz: f64) -> Complex64 {
    let mut h = Complex64::new(0.0, 0.0);
    for &(amp, delay) in paths {
        let phase = -std::f64::consts::TAU * freq_hz * delay;
        h += amp * Complex64::from_polar(1.0, phase);
    }
    h
}

/// Subcarrier center frequencies from the task's RF profile.
pub fn subcarrier_frequencies(carrier_hz: f64, bandwidth_hz: f64, count: u16) -> Vec<f64> {
    let n = f64::from(count);
    let spacing = bandwidth_hz / n;
    (0..count)
        .map(|i| carrier_hz + (f64::from(i) - (n - 1.0) / 2.0) * spacing)
        .collect()
}

pub fn simulate_csi(scene: &Scene, task: &SensingTask) -> Result<Vec<TraceRow>> {
    let profile = &task.ota_profile;
    if profile.subcarriers < 2 {
        return Err(PlatformError::Config(
            "CSI simulation needs at least 2 subcarriers".into(),
        ));
    }
    let geometry = scene.link_geometry()?;
    let links = &profile.neighborhood_links;
    if links.is_empty() {
        return Err(PlatformError::Config("no active links".into()));
    }
    for &l in links {
        if usize::try_from(l).unwrap() >= geometry.len() {
            return Err(PlatformError::Config(format!("link {l} not deployed")));
        }
    }
    let freqs = subcarrier_frequencies(
        profile.carrier_frequency_hz,
        profile.bandwidth_hz,
        profile.subcarriers,
    );
    let statics: Vec<Vec<StaticPath>> = links
        .iter()
        .map(|&l| {
            let (tx, rx) = geometry[l as usize];
            static_paths(scene, l, distance(tx, rx) / SPEED_OF_LIGHT)
        })
        .collect();

    let sigma = scene.csi.los_gain * scene.noise_preset.csi_sigma();
    let noise = Normal::new(0.0, sigma).map_err(|e| PlatformError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);

    let sampling = i64::from(profile.cqi_sampling_ms);
    let mut rows = Vec::new();
    let mut paths: Vec<(Complex64, f64)> = Vec::new();
    let mut t = 0i64;
    while t < scene.duration_ms {
        for (li, &link_id) in links.iter().enumerate() {
            let (tx, rx) = geometry[link_id as usize];
            let los_delay = distance(tx, rx) / SPEED_OF_LIGHT;
            paths.clear();
            for sp in &statics[li] {
                paths.push((sp.amp, sp.delay_s));
            }
            for target in &scene.targets {
                if let Some(path) = target_path(scene, target, tx, rx, los_delay, t) {
                    paths.push(path);
                }
            }
            let rx_device = &scene.deployment.links[link_id as usize].rx_device;
            for (fi, &freq) in freqs.iter().enumerate() {
                // noise drawn unconditionally, independent of targets
                let n_re: f64 = noise.sample(&mut rng);
                let n_im: f64 = noise.sample(&mut rng);
                let h = channel_response(&paths, freq) + Complex64::new(n_re, n_im);
                rows.push(TraceRow {
                    time_ms: t,
                    device_id: rx_device.clone(),
                    link_id,
                    freq_index: fi as u16,
                    cqi_type: CqiType::Phy,
                    re: h.re,
                    im: h.im,
                });
            }
        }
        t += sampling;
    }
    Ok(rows)
}

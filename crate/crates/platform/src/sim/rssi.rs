//! Elliptical link-shadowing RSSI model.
//!
//! Each link's received power follows log-distance path loss; a target
//! whose reflection path exceeds the direct path by less than
//! `lambda_m` sits inside the link's Fresnel-style ellipse and
//! attenuates it by `phi_db`. Gaussian noise per sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use radiosense_core::cqi::{CqiType, SensingTask};

use crate::trace::TraceRow;
use crate::{PlatformError, Result};

use super::{distance, excess_path, Scene, Target};

pub fn simulate_rssi(scene: &Scene, task: &SensingTask) -> Result<Vec<TraceRow>> {
    let geometry = scene.link_geometry()?;
    let links = &task.ota_profile.neighborhood_links;
    if links.is_empty() {
        return Err(PlatformError::Config("no active links".into()));
    }
    for &l in links {
        if usize::try_from(l).unwrap() >= geometry.len() {
            return Err(PlatformError::Config(format!("link {l} not deployed")));
        }
    }
    let params = &scene.rssi;
    let base: Vec<f64> = links
        .iter()
        .map(|&l| {
            let (tx, rx) = geometry[l as usize];
            let d = distance(tx, rx).max(0.1);
            params.ref_dbm - 10.0 * params.path_loss_exponent * d.log10()
        })
        .collect();

    let sampling = i64::from(task.ota_profile.cqi_sampling_ms);
    let noise = Normal::new(0.0, scene.noise_preset.rssi_sigma_db())
        .map_err(|e| PlatformError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);

    let mut rows = Vec::new();
    let mut t = 0i64;
    while t < scene.duration_ms {
        for (i, &link_id) in links.iter().enumerate() {
            // noise drawn unconditionally so target placement and phi
            // do not shift the noise sequence
            let n: f64 = noise.sample(&mut rng);
            let (tx, rx) = geometry[link_id as usize];
            let mut value = base[i];
            for target in &scene.targets {
                let inside = match target {
                    Target::Trajectory { .. } => target
                        .position_at(t)
                        .map(|p| excess_path(tx, rx, p) <= params.lambda_m)
                        .unwrap_or(false),
                    Target::Activity { position, .. } => {
                        target.activity_at(t).is_some()
                            && excess_path(tx, rx, *position) <= params.lambda_m
                    }
                };
                if inside {
                    value -= params.phi_db;
                }
            }
            value += n;
            let rx_device = &scene.deployment.links[link_id as usize].rx_device;
            rows.push(TraceRow {
                time_ms: t,
                device_id: rx_device.clone(),
                link_id,
                freq_index: 0,
                cqi_type: CqiType::Up,
                re: value,
                im: 0.0,
            });
        }
        t += sampling;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{NoisePreset, RssiParams, Waypoint};
    use radiosense_core::cqi::{
        Area, CqiType, DeploymentConfig, DeviceDescriptor, FeatureRecipe, GatewayDescriptor,
        LinkSpec, OtaProfile, TaskType,
    };

    fn two_device_scene(targets: Vec<Target>) -> Scene {
        Scene {
            deployment: DeploymentConfig {
                gateways: vec![GatewayDescriptor {
                    gw_id: "gw0".into(),
                    bind_addr: None,
                    cache_size: 4096,
                }],
                devices: vec![
                    DeviceDescriptor { device_id: "d0".into(), position: [0.0, 0.0] },
                    DeviceDescriptor { device_id: "d1".into(), position: [4.0, 0.0] },
                ],
                area: Area { x: 0.0, y: -1.5, width: 4.0, height: 3.0 },
                links: vec![LinkSpec { tx_device: "d0".into(), rx_device: "d1".into() }],
            },
            seed: 42,
            environment_seed: 1,
            noise_preset: NoisePreset::HighSnr,
            duration_ms: 6000,
            rssi: RssiParams::default(),
            csi: Default::default(),
            targets,
            cells: Vec::new(),
            none_label: "no_activity".into(),
        }
    }

    fn rssi_task() -> SensingTask {
        SensingTask {
            task_id: "det".into(),
            task_type: TaskType::Detection,
            latent_labels: vec!["empty".into(), "occupied".into()],
            priors: vec![0.5, 0.5],
            feature_recipe: FeatureRecipe::Pca,
            num_components: Some(1),
            eigenvalue_threshold: None,
            window_ms: 600,
            hop_ms: None,
            cqi_type: CqiType::Up,
            ota_profile: OtaProfile {
                neighborhood_links: vec![0],
                carrier_frequency_hz: 2.4e9,
                bandwidth_hz: 2e6,
                subcarriers: 1,
                duty_cycle_ms: 60,
                cqi_type: CqiType::Up,
                cqi_sampling_ms: 60,
            },
            gateway_combine: Default::default(),
        }
    }

    #[test]
    fn background_mean_approaches_base_rssi() {
        let scene = two_device_scene(Vec::new());
        let rows = simulate_rssi(&scene, &rssi_task()).unwrap();
        let n = rows.len() as f64;
        let mean: f64 = rows.iter().map(|r| r.re).sum::<f64>() / n;
        let base = -40.0 - 20.0 * 4.0f64.log10();
        let bound = 3.0 * scene.noise_preset.rssi_sigma_db() / n.sqrt();
        assert!(
            (mean - base).abs() <= bound * 2.0,
            "mean {mean} vs base {base} (bound {bound})"
        );
    }

    #[test]
    fn midpoint_target_attenuates_by_phi() {
        let still = |x: f64, y: f64| Target::Trajectory {
            waypoints: vec![Waypoint { t_ms: 0, x, y }],
        };
        let empty_scene = two_device_scene(Vec::new());
        let occupied_scene = two_device_scene(vec![still(2.0, 0.0)]);
        let task = rssi_task();
        let empty = simulate_rssi(&empty_scene, &task).unwrap();
        let occupied = simulate_rssi(&occupied_scene, &task).unwrap();
        let mean = |rows: &[TraceRow]| rows.iter().map(|r| r.re).sum::<f64>() / rows.len() as f64;
        let drop = mean(&empty) - mean(&occupied);
        assert!((drop - 5.0).abs() < 0.2, "attenuation {drop} should be ~phi");
    }

    #[test]
    fn target_outside_ellipse_never_attenuates() {
        let far = Target::Trajectory {
            waypoints: vec![Waypoint { t_ms: 0, x: 2.0, y: 1.4 }],
        };
        // excess path of (2.0, 1.4) off a 4 m link is ~1.4 m > lambda
        let with = two_device_scene(vec![far]);
        let without = two_device_scene(Vec::new());
        let task = rssi_task();
        let a = simulate_rssi(&with, &task).unwrap();
        let b = simulate_rssi(&without, &task).unwrap();
        assert_eq!(a, b, "same seed, no shadowing: traces identical");
    }

    #[test]
    fn increasing_phi_never_increases_any_sample() {
        let still = Target::Trajectory {
            waypoints: vec![Waypoint { t_ms: 0, x: 2.0, y: 0.05 }],
        };
        let mut scene = two_device_scene(vec![still]);
        let task = rssi_task();
        let base = simulate_rssi(&scene, &task).unwrap();
        scene.rssi.phi_db = 9.0;
        let stronger = simulate_rssi(&scene, &task).unwrap();
        for (a, b) in base.iter().zip(&stronger) {
            assert!(b.re <= a.re + 1e-12);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let scene = two_device_scene(Vec::new());
        let task = rssi_task();
        let a = simulate_rssi(&scene, &task).unwrap();
        let b = simulate_rssi(&scene, &task).unwrap();
        assert_eq!(a, b);
    }
}

//! Raw CQI domain types and pre-manipulation.
//!
//! A [`CqiSeries`] collects receiver-side measurements indexed by
//! `(frequency, link, time)`. The module supplies the edge-side
//! pre-processing chain — interpolation, phase correction, denoising —
//! plus windowing and background-referenced activity segmentation.

mod preprocess;
mod segment;
mod types;

pub use preprocess::{
    correct_phase, denoise, fit_phase_ramp, interpolate_missing, unwrap_phases, wrap_angle,
};
pub use segment::{alteration_signal, segment_activity, window, DEFAULT_THRESHOLD_MULT};
pub use types::{
    Area, BackgroundProfile, CqiSample, CqiSeries, CqiType, DeploymentConfig, DeviceDescriptor,
    FeatureRecipe, GatewayDescriptor, Layout, LinkSpec, OtaProfile, SensingTask, TaskType,
};

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use num_complex::Complex64;

    #[test]
    fn flatten_round_trip() {
        let links = vec![3, 1];
        let mut samples = Vec::new();
        for f in 0..2u16 {
            for &l in &links {
                for t in 0..3i64 {
                    samples.push(CqiSample {
                        time_ms: t * 60,
                        freq_index: f,
                        link_id: l,
                        cqi_type: CqiType::Phy,
                        value: Complex64::new(f64::from(f) + l as f64, t as f64),
                    });
                }
            }
        }
        let series = CqiSeries::new("dev", CqiType::Phy, 60, 2, links.clone(), samples).unwrap();
        let (values, times) = series.flatten().unwrap();
        assert_eq!(values.len(), 12);
        let back =
            CqiSeries::unflatten("dev", CqiType::Phy, 60, 2, links, &times, &values).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn flatten_order_is_freq_link_time() {
        // F=2, L=2, Nt=2 with value encoding 100*f + 10*l + t
        let links = vec![0, 1];
        let mut samples = Vec::new();
        for f in 0..2u16 {
            for l in 0..2u32 {
                for t in 0..2i64 {
                    samples.push(CqiSample {
                        time_ms: t,
                        freq_index: f,
                        link_id: l,
                        cqi_type: CqiType::Up,
                        value: Complex64::new((100 * f as i64 + 10 * l as i64 + t) as f64, 0.0),
                    });
                }
            }
        }
        let series = CqiSeries::new("dev", CqiType::Up, 1, 2, links, samples).unwrap();
        let (values, _) = series.flatten().unwrap();
        let got: Vec<f64> = values.iter().map(|c| c.re).collect();
        assert_eq!(got, vec![0.0, 1.0, 10.0, 11.0, 100.0, 101.0, 110.0, 111.0]);
    }

    #[test]
    fn snapshot_stacks_complex_blockwise() {
        let samples = vec![
            CqiSample {
                time_ms: 0,
                freq_index: 0,
                link_id: 0,
                cqi_type: CqiType::Phy,
                value: Complex64::new(1.0, 5.0),
            },
            CqiSample {
                time_ms: 60,
                freq_index: 0,
                link_id: 0,
                cqi_type: CqiType::Phy,
                value: Complex64::new(3.0, 7.0),
            },
        ];
        let series = CqiSeries::new("dev", CqiType::Phy, 60, 1, vec![0], samples).unwrap();
        assert_eq!(series.snapshot_vector().unwrap(), vec![2.0, 6.0]);
    }

    #[test]
    fn task_validation_checks_priors() {
        let ota = OtaProfile {
            neighborhood_links: vec![0],
            carrier_frequency_hz: 2.4e9,
            bandwidth_hz: 2e6,
            subcarriers: 1,
                duty_cycle_ms: 60,
            cqi_type: CqiType::Up,
            cqi_sampling_ms: 60,
        };
        let mut task = SensingTask {
            task_id: "t1".into(),
            task_type: TaskType::Detection,
            latent_labels: vec!["empty".into(), "occupied".into()],
            priors: vec![0.5, 0.5],
            feature_recipe: FeatureRecipe::Pca,
            num_components: Some(4),
            eigenvalue_threshold: None,
            window_ms: 600,
            hop_ms: None,
            cqi_type: CqiType::Up,
            ota_profile: ota,
            gateway_combine: Default::default(),
        };
        assert!(task.validate().is_ok());
        task.priors = vec![0.5, 0.4];
        assert!(task.validate().is_err());
        task.priors = vec![0.5, 0.5];
        task.num_components = None;
        assert!(task.validate().is_err());
        task.eigenvalue_threshold = Some(5.0);
        assert!(task.validate().is_ok());
    }

    #[test]
    fn ota_profile_validation() {
        let mut ota = OtaProfile {
            neighborhood_links: vec![0],
            carrier_frequency_hz: 2.4e9,
            bandwidth_hz: 2e6,
            subcarriers: 1,
                duty_cycle_ms: 60,
            cqi_type: CqiType::Up,
            cqi_sampling_ms: 30,
        };
        assert!(ota.validate().is_err());
        ota.cqi_sampling_ms = 120;
        assert!(ota.validate().is_ok());
    }
}

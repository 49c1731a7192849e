//! End-to-end self-reconstruction: simulate views of a known composite
//! target, train from a hemisphere, and score images and geometry.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{cloud_metrics, dbscan_filter, image_metrics, sample_target_points, CloudMetricsReport, DbscanOptions};
use crate::optim::{init_hemisphere, train, LearningRates, LogRecord, TrainConfig};
use crate::raster::{render, RenderOptions};
use crate::scene_gen::{composite_target, tank_preset, CuboidSpec};
use crate::simulate::{simulate, Sweep};
use crate::types::{PointCloud, Scene, Split};

/// Backscatter below which a primitive is left out of the reconstructed cloud.
pub const MIN_BACKSCATTER: f64 = 0.01;

/// Primitive centers whose backscatter strength reaches `min_backscatter`,
/// weighted by their DC phase.
pub fn reconstruction_cloud(scene: &Scene, min_backscatter: f64) -> PointCloud {
    let keep: Vec<usize> = (0..scene.len())
        .filter(|&i| scene.primitives[i].backscatter() >= min_backscatter)
        .collect();
    scene.to_point_cloud().select(&keep)
}

/// Training schedule for short desk-scale runs: a faster position rate and a
/// densify window that opens while the phase functions are still isotropic.
pub fn desk_train_config(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        lr: LearningRates {
            position_init: 2e-3,
            position_final: 2e-5,
            ..Default::default()
        },
        densify_start: iterations / 20,
        densify_end: iterations * 4 / 5,
        seed,
        log_interval: 100,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub parts: Vec<CuboidSpec>,
    /// Surface samples per square meter of the target.
    pub density: f64,
    pub target_seed: u64,
    pub sweep: Sweep,
    pub init_points: usize,
    pub init_radius: f64,
    pub init_seed: u64,
    pub train: TrainConfig,
    pub dbscan: DbscanOptions,
    pub reference_points: usize,
    pub tau: f64,
}

impl RoundTrip {
    /// The tank preset at about 200 primitives, 64×32 views at 0.3 m with
    /// 0.3 m ray cells, and a 2,000-point hemisphere of radius 3 m.
    pub fn standard(iterations: usize, init_points: usize, seed: u64) -> Self {
        let mut sweep = Sweep::standard(64, 32, 0.3);
        sweep.ray_cell_m = Some(0.3);
        Self {
            parts: tank_preset(),
            density: 10.0,
            target_seed: 7,
            sweep,
            init_points,
            init_radius: 3.0,
            init_seed: seed,
            train: desk_train_config(iterations, seed),
            dbscan: DbscanOptions::new(0.3, 5),
            reference_points: 5000,
            tau: 0.6,
        }
    }

    pub fn run(&self) -> Result<RoundTripReport> {
        let target = composite_target(&self.parts, self.density, self.target_seed)?;
        let opts = RenderOptions::default();
        let (dataset, _) = simulate(&target, &self.sweep.views()?, &opts)?;
        let init = init_hemisphere(self.init_points, self.init_radius, self.init_seed)?;

        let start = Instant::now();
        let result = train(&dataset, &init, &self.train)?;
        let train_seconds = start.elapsed().as_secs_f64();

        let pairs = dataset
            .views
            .iter()
            .map(|v| Ok((render(&result.scene, &v.config, &opts)?, v.image.clone(), v.split)))
            .collect::<Result<Vec<_>>>()?;
        let images = image_metrics(&pairs, 1.0)?;
        let nan = (f64::NAN, f64::NAN);
        let (train_psnr, train_ssim) = images.split_mean(Split::Train).unwrap_or(nan);
        let (test_psnr, test_ssim) = images.split_mean(Split::Test).unwrap_or(nan);

        let reference = sample_target_points(&self.parts, self.reference_points, self.target_seed, false)?;
        let raw = reconstruction_cloud(&result.scene, MIN_BACKSCATTER);
        let filtered = dbscan_filter(&raw, &self.dbscan)?;
        let cloud = cloud_metrics(&filtered, &reference, self.tau)?;
        Ok(RoundTripReport {
            target_primitives: target.len(),
            final_primitives: result.scene.len(),
            cloned: result.cloned,
            split: result.split,
            pruned: result.pruned,
            train_psnr,
            train_ssim,
            test_psnr,
            test_ssim,
            raw_points: raw.len(),
            filtered_points: filtered.len(),
            cloud,
            train_seconds,
            log: result.log,
            scene: result.scene,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTripReport {
    pub target_primitives: usize,
    pub final_primitives: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub train_psnr: f64,
    pub train_ssim: f64,
    pub test_psnr: f64,
    pub test_ssim: f64,
    pub raw_points: usize,
    pub filtered_points: usize,
    pub cloud: CloudMetricsReport,
    pub train_seconds: f64,
    pub log: Vec<LogRecord>,
    #[serde(skip)]
    pub scene: Scene,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GaussianPrimitive;
    use nalgebra::Vector3;

    #[test]
    fn cloud_drops_transparent_and_dark_primitives() {
        let bright = GaussianPrimitive::isotropic(Vector3::zeros(), 0.1, 1.0, 2.0);
        let mut clear = bright.clone();
        clear.ke_forward_raw = -20.0;
        clear.ke_backward_raw = -20.0;
        let dark = GaussianPrimitive::isotropic(Vector3::x(), 0.1, 0.0, 2.0);
        let cloud = reconstruction_cloud(&Scene::new(vec![bright, clear, dark]), MIN_BACKSCATTER);
        assert_eq!(cloud.points, vec![Vector3::zeros()]);
    }

    #[test]
    fn desk_config_is_valid() {
        let c = desk_train_config(10_000, 1);
        c.validate().unwrap();
        assert_eq!((c.densify_start, c.densify_end), (500, 8000));
    }

    #[test]
    fn short_round_trip_runs() {
        let mut rt = RoundTrip::standard(60, 100, 1);
        rt.sweep.azimuths_deg = vec![0.0, 45.0, 60.0];
        rt.sweep.elevations_deg = vec![45.0];
        rt.sweep.n_range = 32;
        rt.sweep.n_azimuth = 16;
        rt.density = 3.0;
        rt.reference_points = 300;
        rt.dbscan = DbscanOptions::new(1.0, 2);
        let r = rt.run().unwrap();
        assert_eq!(r.log.len(), 2);
        assert!(r.test_psnr.is_finite() && r.train_seconds >= 0.0);
    }
}

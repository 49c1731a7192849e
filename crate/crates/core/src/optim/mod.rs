//! Reconstruction: loss, Adam, hemisphere initialization, densification and
//! pruning, SH-degree schedule and the training loop.

mod adam;
mod densify;
mod init;
mod loss;
mod train;

pub use adam::{adam_step, AdamState, StepOptions, StepStats};
pub use densify::{densify_and_prune, DensifyOutcome, DensifyStats};
pub use init::init_hemisphere;
pub use loss::loss;
pub use train::{position_lr, scene_extent, train, LogRecord, TrainResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-group Adam step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    /// Initial position rate as a fraction of the scene extent.
    pub position_init: f64,
    /// Final position rate as a fraction of the scene extent.
    pub position_final: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub sh: f64,
    pub extinction: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            rotation: 1e-3,
            log_scales: 5e-3,
            sh: 2.5e-3,
            extinction: 5e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: LearningRates,
    pub lambda_ssim: f64,
    pub densify: bool,
    pub prune: bool,
    pub densify_start: usize,
    pub densify_end: usize,
    pub densify_interval: usize,
    /// Mean 2D positional-gradient norm above which a primitive is cloned or split.
    pub densify_grad_threshold: f64,
    /// Primitives larger than this (meters, largest axis) are split rather than cloned.
    pub split_scale: f64,
    /// Prune when the largest axis exceeds this fraction of the illumination extent.
    pub max_radius_factor: f64,
    /// Prune when the backscatter strength, see
    /// [`GaussianPrimitive::backscatter`](crate::types::GaussianPrimitive::backscatter), falls below this.
    pub prune_phase_floor: f64,
    pub sh_interval: usize,
    /// Scene extent used to scale the position rate; derived from the initial scene when unset.
    pub scene_extent: Option<f64>,
    /// Reduced rates and bounded displacements for real data.
    pub real_data_mode: bool,
    /// Largest per-step position change in real-data mode, meters.
    pub displacement_bound: f64,
    pub seed: u64,
    /// Iterations between log records; 0 disables logging.
    pub log_interval: usize,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    pub checkpoint_dir: Option<std::path::PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            lr: LearningRates::default(),
            lambda_ssim: 0.2,
            densify: true,
            prune: true,
            densify_start: 10_000,
            densify_end: 25_000,
            densify_interval: 100,
            densify_grad_threshold: 0.003,
            split_scale: 0.3,
            max_radius_factor: 0.3,
            prune_phase_floor: 0.005,
            sh_interval: 2500,
            scene_extent: None,
            real_data_mode: false,
            displacement_bound: 0.05,
            seed: 0,
            log_interval: 100,
            checkpoint_interval: 0,
            checkpoint_dir: None,
        }
    }
}

/// Multiplier applied to every rate in real-data mode.
pub const REAL_DATA_LR_SCALE: f64 = 0.3;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.densify_start <= self.densify_end && self.densify_end <= self.iterations.max(self.densify_end)) {
            return bad("densify window must satisfy start ≤ end");
        }
        if self.densify_end > self.iterations && self.iterations > 0 && self.densify {
            return bad("densify window must end by the last iteration");
        }
        let positive = [
            self.densify_grad_threshold,
            self.split_scale,
            self.max_radius_factor,
            self.prune_phase_floor,
            self.displacement_bound,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return bad("thresholds must be positive");
        }
        if self.densify_interval == 0 || self.sh_interval == 0 {
            return bad("intervals must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return bad("lambda_ssim must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Active SH degree: one more every `interval` iterations, capped at 3.
pub fn sh_schedule(iteration: usize, interval: usize) -> usize {
    (iteration / interval.max(1)).min(crate::sh::MAX_DEGREE)
}

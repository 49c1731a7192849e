//! Central finite-difference check of the analytic backward pass.
//!
//! The loss is `½·Σ(S − T)²` against a random target `T`, rendered with
//! culling disabled so the loss is smooth in every parameter.

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::world_to_radar;
use crate::raster::{backward, render, render_with_state, RenderOptions};
use crate::sh;
use crate::types::{param, GaussianPrimitive, RadarConfig, SarImage, Scene, N_PARAMS};

/// Parameter groups reported separately, as `(name, first index, count)`.
pub const GROUPS: [(&str, usize, usize); 5] = [
    ("position", param::POSITION, 3),
    ("rotation", param::ROTATION, 4),
    ("log_scales", param::LOG_SCALES, 3),
    ("sh", param::SH, 16),
    ("extinction", param::KE_FORWARD, 2),
];

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Primitives whose unclamped phase is this close to zero are skipped.
    pub clamp_margin: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            rel_tol: 1e-4,
            abs_tol: 1e-8,
            clamp_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub checked: usize,
    pub failed: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    /// Primitives left out because they sit at the phase clamp.
    pub excluded: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.failed == 0)
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    fn merge(&mut self, other: &GradcheckReport) {
        if self.groups.is_empty() {
            self.groups = other.groups.clone();
        } else {
            for (a, b) in self.groups.iter_mut().zip(&other.groups) {
                a.checked += b.checked;
                a.failed += b.failed;
                a.max_rel_err = a.max_rel_err.max(b.max_rel_err);
                a.max_abs_err = a.max_abs_err.max(b.max_abs_err);
            }
        }
        self.excluded += other.excluded;
    }
}

/// Square `size × size` view at 45° used by the check.
pub fn check_config(size: usize, azimuth_deg: f64, elevation_deg: f64) -> RadarConfig {
    RadarConfig::new(azimuth_deg, elevation_deg, 20.0, 0.3, size, size)
}

/// Random anisotropic scene that lands inside the view, with well separated
/// depths and phases away from the clamp.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, config: &RadarConfig) -> Scene {
    let half = 0.3 * config.n_azimuth.min(config.n_range) as f64 * 0.3;
    let mut prims: Vec<GaussianPrimitive> = Vec::with_capacity(n);
    let radar = config.radar_position();
    while prims.len() < n {
        let pos = Vector3::new(
            rng.gen_range(-half..half),
            rng.gen_range(-half..half),
            rng.gen_range(0.0..half),
        );
        let mut p = GaussianPrimitive::isotropic(pos, 1.0, rng.gen_range(0.8..3.0), rng.gen_range(-1.5..1.5));
        p.ke_backward_raw = rng.gen_range(-1.5..1.5);
        p.rotation = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        p.log_scales = Vector3::from_fn(|_, _| rng.gen_range(-2.0..-0.3));
        for c in p.sh_coeffs.iter_mut().skip(1) {
            *c = rng.gen_range(-0.4..0.4);
        }
        let depth = world_to_radar(&pos, config).z;
        let far_from_others = prims
            .iter()
            .all(|q| (world_to_radar(&q.position, config).z - depth).abs() > 1e-3);
        let unclamped = sh::eval_unclamped(&p.sh_coeffs, &(pos - radar).normalize());
        if far_from_others && unclamped.abs() > 0.05 && p.rotation.norm() > 0.2 {
            prims.push(p);
        }
    }
    Scene::new(prims)
}

fn loss(scene: &Scene, config: &RadarConfig, target: &SarImage, opts: &RenderOptions) -> Result<f64> {
    let img = render(scene, config, opts)?;
    Ok(0.5 * img.data.iter().zip(&target.data).map(|(s, t)| (s - t) * (s - t)).sum::<f64>())
}

/// Compares every analytic gradient component of `scene` against central differences.
pub fn check_scene(
    scene: &Scene,
    config: &RadarConfig,
    target: &SarImage,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let render_opts = RenderOptions::exact();
    let (img, state) = render_with_state(scene, config, &render_opts)?;
    let mut dl_ds = img.clone();
    for (g, t) in dl_ds.data.iter_mut().zip(&target.data) {
        *g -= t;
    }
    let grads = backward(scene, config, &state, &dl_ds)?;

    let radar = config.radar_position();
    let mut report = GradcheckReport {
        groups: GROUPS
            .iter()
            .map(|(name, _, _)| GroupReport {
                group: name.to_string(),
                ..Default::default()
            })
            .collect(),
        excluded: 0,
    };
    let mut probe = scene.clone();
    for (i, prim) in scene.primitives.iter().enumerate() {
        let unclamped = sh::eval_unclamped(&prim.sh_coeffs, &(prim.position - radar).normalize());
        if unclamped.abs() < opts.clamp_margin {
            report.excluded += 1;
            continue;
        }
        let base = prim.to_params();
        for (group, &(_, start, count)) in report.groups.iter_mut().zip(GROUPS.iter()) {
            for j in start..start + count {
                let mut p: [f64; N_PARAMS] = base;
                p[j] = base[j] + opts.step;
                probe.primitives[i] = GaussianPrimitive::from_params(&p);
                let up = loss(&probe, config, target, &render_opts)?;
                p[j] = base[j] - opts.step;
                probe.primitives[i] = GaussianPrimitive::from_params(&p);
                let down = loss(&probe, config, target, &render_opts)?;
                probe.primitives[i] = prim.clone();

                let numeric = (up - down) / (2.0 * opts.step);
                let analytic = grads.params[i][j];
                let abs = (analytic - numeric).abs();
                let rel = abs / analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
                group.checked += 1;
                group.max_abs_err = group.max_abs_err.max(abs);
                if abs > opts.abs_tol {
                    group.max_rel_err = group.max_rel_err.max(rel);
                    if rel >= opts.rel_tol {
                        group.failed += 1;
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Runs the check on `n_scenes` random scenes of up to `max_primitives`
/// primitives in a `size × size` image.
pub fn run(seed: u64, size: usize, n_scenes: usize, max_primitives: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GradcheckOptions::default();
    let mut total = GradcheckReport::default();
    for _ in 0..n_scenes {
        let config = check_config(size, rng.gen_range(0.0..360.0), rng.gen_range(20.0..70.0));
        let n = rng.gen_range(1..=max_primitives.max(1));
        let scene = random_scene(&mut rng, n, &config);
        let target = SarImage::from_vec(
            config.n_range,
            config.n_azimuth,
            (0..config.n_range * config.n_azimuth).map(|_| rng.gen_range(0.0..0.5)).collect(),
        )?;
        total.merge(&check_scene(&scene, &config, &target, &opts)?);
    }
    Ok(total)
}

//! World → radar transforms, the two orthographic projection planes and the
//! covariance sandwich.
//!
//! The computation plane spans (azimuth, cross-range) and is traversed by rays
//! along the radar line of sight; the imaging plane spans (azimuth, slant range)
//! and receives the scattered energy. Both share the half-pixel-center convention
//! `pixel = (ndc + 1) / 2 · n − 0.5`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::RenderOptions;
use crate::sh;
use crate::types::{RadarConfig, Scene};

pub use crate::sh::eval_phase_function;

/// Diagonal regularization added to every projected covariance, in pixel².
pub const COV_REGULARIZATION: f64 = 0.3;

/// Rotation from the world frame to the radar frame.
///
/// Rows are the radar azimuth axis, the cross-range axis and the line of sight.
pub fn radar_rotation(azimuth_deg: f64, elevation_deg: f64) -> Matrix3<f64> {
    let (sp, cp) = azimuth_deg.to_radians().sin_cos();
    let (st, ct) = elevation_deg.to_radians().sin_cos();
    Matrix3::new(
        -sp,
        -cp,
        0.0,
        -st * cp,
        st * sp,
        ct,
        -ct * cp,
        ct * sp,
        -st,
    )
}

/// Radar offset `T_r = −R_r·c` for the radar world position `c`.
pub fn radar_offset(config: &RadarConfig) -> Vector3<f64> {
    -(radar_rotation(config.azimuth_deg, config.elevation_deg) * config.radar_position())
}

pub fn world_to_radar(x_w: &Vector3<f64>, config: &RadarConfig) -> Vector3<f64> {
    radar_rotation(config.azimuth_deg, config.elevation_deg) * x_w + radar_offset(config)
}

/// Normalized computation-plane coordinates and depth (line-of-sight range).
pub fn project_point_computation(x_r: &Vector3<f64>, config: &RadarConfig) -> (Vector2<f64>, f64) {
    let u = 2.0 * x_r.x / (config.azimuth_res_m * config.n_azimuth as f64);
    let v = 2.0 * x_r.y / (config.range_res_m * config.n_range as f64 * config.theta().tan());
    (Vector2::new(u, v), x_r.z)
}

/// Normalized imaging-plane coordinates and the cross-range auxiliary value.
///
/// The slant-range offset is scaled like the slant-range term so that the
/// scene origin lands on the image center at every grazing angle.
pub fn project_point_imaging(x_r: &Vector3<f64>, config: &RadarConfig) -> (Vector2<f64>, f64) {
    let theta = config.theta();
    let range_scale = 2.0 / (config.range_res_m * config.n_range as f64 * theta.tan());
    let u = 2.0 * x_r.x / (config.azimuth_res_m * config.n_azimuth as f64);
    let v = range_scale * (x_r.z - config.altitude_m / theta.sin());
    (Vector2::new(u, v), x_r.y)
}

#[inline]
pub fn ndc_to_pixel(ndc: f64, n: usize) -> f64 {
    (ndc + 1.0) * 0.5 * n as f64 - 0.5
}

#[inline]
pub fn pixel_to_ndc(pixel: f64, n: usize) -> f64 {
    (pixel + 0.5) * 2.0 / n as f64 - 1.0
}

/// Pixel-unit Jacobian of the computation-plane projection with respect to radar coordinates.
pub fn computation_jacobian(config: &RadarConfig) -> Matrix2x3<f64> {
    let (cols, rows) = config.ray_grid;
    Matrix2x3::new(
        cols as f64 / (config.azimuth_res_m * config.n_azimuth as f64),
        0.0,
        0.0,
        0.0,
        rows as f64 / (config.range_res_m * config.n_range as f64 * config.theta().tan()),
        0.0,
    )
}

/// Pixel-unit Jacobian of the imaging-plane projection with respect to radar coordinates.
pub fn imaging_jacobian(config: &RadarConfig) -> Matrix2x3<f64> {
    Matrix2x3::new(
        1.0 / config.azimuth_res_m,
        0.0,
        0.0,
        0.0,
        0.0,
        1.0 / (config.range_res_m * config.theta().tan()),
    )
}

/// Computation-plane pixel coordinates (column, row) of a radar-frame point.
pub fn computation_pixel(x_r: &Vector3<f64>, config: &RadarConfig) -> Vector2<f64> {
    let (ndc, _) = project_point_computation(x_r, config);
    Vector2::new(ndc_to_pixel(ndc.x, config.ray_grid.0), ndc_to_pixel(ndc.y, config.ray_grid.1))
}

/// Imaging-plane pixel coordinates (column, row) of a radar-frame point.
pub fn imaging_pixel(x_r: &Vector3<f64>, config: &RadarConfig) -> Vector2<f64> {
    let (ndc, _) = project_point_imaging(x_r, config);
    Vector2::new(ndc_to_pixel(ndc.x, config.n_azimuth), ndc_to_pixel(ndc.y, config.n_range))
}

/// `J·R·Σ·Rᵀ·Jᵀ`, symmetrized, plus `regularization` on the diagonal.
pub fn project_covariance(
    cov3d: &Matrix3<f64>,
    rotation: &Matrix3<f64>,
    jacobian: &Matrix2x3<f64>,
    regularization: f64,
) -> Result<Matrix2<f64>> {
    let t = jacobian * rotation;
    let c = t * cov3d * t.transpose();
    let c = (c + c.transpose()) * 0.5 + Matrix2::identity() * regularization;
    let det = c.determinant();
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::DegenerateProjection { index: usize::MAX, det });
    }
    Ok(c)
}

/// Inverse of a symmetric positive-definite 2×2 matrix.
#[inline]
pub fn conic(cov: &Matrix2<f64>) -> Matrix2<f64> {
    let det = cov.m11 * cov.m22 - cov.m12 * cov.m21;
    Matrix2::new(cov.m22 / det, -cov.m12 / det, -cov.m21 / det, cov.m11 / det)
}

/// One primitive after projection onto both planes. Coordinates are in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Index of the source primitive in the scene.
    pub index: usize,
    pub uv_comp: Vector2<f64>,
    pub depth: f64,
    pub uv_img: Vector2<f64>,
    pub aux: f64,
    pub cov2d_comp: Matrix2<f64>,
    pub cov2d_img: Matrix2<f64>,
    pub conic_comp: Matrix2<f64>,
    pub conic_img: Matrix2<f64>,
    pub phase_value: f64,
    pub phase_unclamped: f64,
    pub ke_sum: f64,
    /// Half-widths of the cutoff ellipse's bounding box.
    pub extent_comp: Vector2<f64>,
    pub extent_img: Vector2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ProjectedScene {
    pub gaussians: Vec<ProjectedGaussian>,
    /// Primitives dropped, including degenerate ones.
    pub culled: usize,
    pub degenerate: usize,
}

fn footprint_extent(cov: &Matrix2<f64>, cutoff: f64) -> Vector2<f64> {
    if cutoff.is_infinite() {
        Vector2::repeat(f64::INFINITY)
    } else {
        Vector2::new((cutoff * cov.m11).sqrt(), (cutoff * cov.m22).sqrt())
    }
}

enum Projection {
    Kept(Box<ProjectedGaussian>),
    Culled,
    Degenerate,
}

/// Projects every primitive; keeps scene order among the survivors.
pub fn project_all(scene: &Scene, config: &RadarConfig, opts: &RenderOptions) -> ProjectedScene {
    let rot = radar_rotation(config.azimuth_deg, config.elevation_deg);
    let offset = -(rot * config.radar_position());
    let radar_pos = config.radar_position();
    let j_comp = computation_jacobian(config);
    let j_img = imaging_jacobian(config);
    let (cols, rows) = config.ray_grid;

    let results: Vec<Projection> = scene
        .primitives
        .par_iter()
        .enumerate()
        .map(|(index, prim)| {
            let Ok(cov3d) = prim.covariance() else {
                return Projection::Degenerate;
            };
            let x_r = rot * prim.position + offset;
            let (Ok(cov_c), Ok(cov_i)) = (
                project_covariance(&cov3d, &rot, &j_comp, COV_REGULARIZATION),
                project_covariance(&cov3d, &rot, &j_img, COV_REGULARIZATION),
            ) else {
                return Projection::Degenerate;
            };
            let uv_comp = computation_pixel(&x_r, config);
            let extent_comp = footprint_extent(&cov_c, opts.cutoff);
            let outside = uv_comp.x + extent_comp.x < -0.5
                || uv_comp.x - extent_comp.x > cols as f64 - 0.5
                || uv_comp.y + extent_comp.y < -0.5
                || uv_comp.y - extent_comp.y > rows as f64 - 0.5;
            if outside {
                return Projection::Culled;
            }
            let (_, aux) = project_point_imaging(&x_r, config);
            let look = (prim.position - radar_pos).normalize();
            let phase_unclamped = sh::eval_unclamped(&prim.sh_coeffs, &look);
            Projection::Kept(Box::new(ProjectedGaussian {
                index,
                uv_comp,
                depth: x_r.z,
                uv_img: imaging_pixel(&x_r, config),
                aux,
                cov2d_comp: cov_c,
                cov2d_img: cov_i,
                conic_comp: conic(&cov_c),
                conic_img: conic(&cov_i),
                phase_value: phase_unclamped.max(0.0),
                phase_unclamped,
                ke_sum: prim.extinction_sum(),
                extent_comp,
                extent_img: footprint_extent(&cov_i, opts.cutoff),
            }))
        })
        .collect();

    let mut out = ProjectedScene::default();
    for r in results {
        match r {
            Projection::Kept(g) => out.gaussians.push(*g),
            Projection::Culled => out.culled += 1,
            Projection::Degenerate => {
                out.culled += 1;
                out.degenerate += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GaussianPrimitive;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg45() -> RadarConfig {
        RadarConfig::new(0.0, 45.0, 10.0, 0.3, 128, 128)
    }

    #[test]
    fn rotation_special_angles() {
        let r = radar_rotation(0.0, 0.0);
        let expect = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0);
        assert_relative_eq!(r, expect, epsilon = 1e-15);
        let r = radar_rotation(90.0, 0.0);
        let expect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(r, expect, epsilon = 1e-15);
    }

    #[test]
    fn rotation_is_proper_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = radar_rotation(rng.gen_range(-360.0..360.0), rng.gen_range(0.0..90.0));
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            assert!(err < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn world_to_radar_axes_and_isometry() {
        // T_r = 0 only when the radar sits at the origin; check the rotation part.
        let r = radar_rotation(0.0, 0.0);
        assert_relative_eq!(r * Vector3::x(), Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);

        let cfg = RadarConfig::new(33.0, 27.0, 500.0, 0.3, 64, 64);
        let origin = world_to_radar(&Vector3::zeros(), &cfg);
        assert_relative_eq!(origin, Vector3::new(0.0, 0.0, cfg.slant_range()), epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let b = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let d = (world_to_radar(&a, &cfg) - world_to_radar(&b, &cfg)).norm();
            assert_relative_eq!(d, (a - b).norm(), max_relative = 1e-9);
        }
    }

    #[test]
    fn computation_projection_values() {
        let cfg = cfg45();
        let (uv, depth) = project_point_computation(&Vector3::new(1.0, 2.0, 3.0), &cfg);
        assert_relative_eq!(uv.x, 0.052_083_333_333_333_33, epsilon = 1e-12);
        assert_relative_eq!(uv.y, 0.104_166_666_666_666_67, epsilon = 1e-12);
        assert_eq!(depth, 3.0);
        let (uv, depth) = project_point_computation(&Vector3::new(0.0, 0.0, 7.5), &cfg);
        assert_eq!(uv, Vector2::zeros());
        assert_eq!(depth, 7.5);
        let mut wide = cfg.clone();
        wide.n_azimuth *= 2;
        let (a, _) = project_point_computation(&Vector3::new(1.0, 0.0, 0.0), &cfg);
        let (b, _) = project_point_computation(&Vector3::new(1.0, 0.0, 0.0), &wide);
        assert_eq!(b.x * 2.0, a.x);
    }

    #[test]
    fn imaging_projection_values() {
        let mut cfg = cfg45();
        cfg.altitude_m = 0.0;
        let (uv, _) = project_point_imaging(&Vector3::zeros(), &cfg);
        assert_eq!(uv, Vector2::zeros());
        let v: Vec<f64> = (0..5)
            .map(|k| project_point_imaging(&Vector3::new(0.0, 0.0, k as f64), &cfg).0.y)
            .collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));

        let cfg = cfg45();
        let (uv, aux) = project_point_imaging(&Vector3::new(1.0, 5.0, 3.0), &cfg);
        assert_relative_eq!(uv.x, 0.052_083_333_333_333_33, epsilon = 1e-12);
        let expect_v = 2.0 * 3.0 / 38.4 - 20.0 / (38.4 * 45f64.to_radians().sin());
        assert_relative_eq!(uv.y, expect_v, epsilon = 1e-12);
        assert_relative_eq!(uv.y, -0.580_32, epsilon = 1e-5);
        assert_eq!(aux, 5.0);
    }

    #[test]
    fn projections_are_affine() {
        let cfg = RadarConfig::new(12.0, 31.0, 40.0, 0.25, 32, 48);
        let a = Vector3::new(0.4, -1.0, 30.0);
        let b = Vector3::new(-2.0, 0.7, 52.0);
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let m = a * alpha + b * (1.0 - alpha);
            let (pa, _) = project_point_imaging(&a, &cfg);
            let (pb, _) = project_point_imaging(&b, &cfg);
            let (pm, _) = project_point_imaging(&m, &cfg);
            assert_relative_eq!(pm, pa * alpha + pb * (1.0 - alpha), epsilon = 1e-12);
            let (pa, _) = project_point_computation(&a, &cfg);
            let (pb, _) = project_point_computation(&b, &cfg);
            let (pm, _) = project_point_computation(&m, &cfg);
            assert_relative_eq!(pm, pa * alpha + pb * (1.0 - alpha), epsilon = 1e-12);
        }
    }

    #[test]
    fn covariance_projection_cases() {
        let j = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let c = project_covariance(&Matrix3::identity(), &Matrix3::identity(), &j, 0.3).unwrap();
        assert_relative_eq!(c, Matrix2::identity() * 1.3, epsilon = 1e-15);
        let c = project_covariance(
            &Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)),
            &Matrix3::identity(),
            &j,
            0.0,
        )
        .unwrap();
        assert_relative_eq!(c, Matrix2::new(4.0, 0.0, 0.0, 1.0), epsilon = 1e-15);
        let err = project_covariance(&Matrix3::zeros(), &Matrix3::identity(), &j, 0.0);
        assert!(matches!(err, Err(Error::DegenerateProjection { .. })));
    }

    #[test]
    fn covariance_projection_preserves_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let cov = a * a.transpose();
            let r = radar_rotation(rng.gen_range(0.0..360.0), rng.gen_range(1.0..89.0));
            let cfg = RadarConfig::new(0.0, rng.gen_range(5.0..85.0), 10.0, 0.3, 16, 16);
            for j in [computation_jacobian(&cfg), imaging_jacobian(&cfg)] {
                let c = project_covariance(&cov, &r, &j, COV_REGULARIZATION).unwrap();
                assert!((c - c.transpose()).abs().max() < 1e-10);
                assert!(c.cholesky().is_some());
            }
        }
    }

    #[test]
    fn project_all_centers_culls_and_conserves() {
        let cfg = RadarConfig::new(0.0, 45.0, 100.0, 0.3, 16, 16);
        let opts = RenderOptions::default();
        let centered = Scene::new(vec![GaussianPrimitive::isotropic(Vector3::zeros(), 0.1, 1.0, 0.0)]);
        let p = project_all(&centered, &cfg, &opts);
        assert_eq!(p.gaussians.len(), 1);
        assert_relative_eq!(p.gaussians[0].uv_comp, Vector2::new(7.5, 7.5), epsilon = 1e-9);
        assert_relative_eq!(p.gaussians[0].uv_img, Vector2::new(7.5, 7.5), epsilon = 1e-9);

        // Displace by one full swath along the radar azimuth axis.
        let r = radar_rotation(cfg.azimuth_deg, cfg.elevation_deg);
        let shift = r.transpose() * Vector3::new(cfg.azimuth_res_m * cfg.n_azimuth as f64, 0.0, 0.0);
        let far = Scene::new(vec![GaussianPrimitive::isotropic(shift, 0.1, 1.0, 0.0)]);
        let p = project_all(&far, &cfg, &opts);
        assert!(p.gaussians.is_empty());
        assert_eq!(p.culled, 1);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prims: Vec<_> = (0..40)
            .map(|_| {
                let pos = Vector3::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(0.0..3.0));
                GaussianPrimitive::isotropic(pos, 0.2, 1.0, 0.0)
            })
            .collect();
        let p = project_all(&Scene::new(prims), &cfg, &opts);
        assert_eq!(p.gaussians.len() + p.culled, 40);
        assert!(p.gaussians.windows(2).all(|w| w[0].index < w[1].index));
    }
}

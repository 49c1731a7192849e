//! Reverse-mode gradients of the rendered image, stage by stage:
//! splat → ray accumulation → phase function → projection and covariance
//! factorization.
//!
//! Every stage runs in parallel over tiles or rays and writes into per-entry
//! buffers that are merged sequentially, so results are bit-reproducible.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::forward::{for_each_splat_in_tile, ForwardState};
use crate::error::{Error, Result};
use crate::geometry::{computation_jacobian, imaging_jacobian, radar_rotation};
use crate::sh;
use crate::types::{
    activate_extinction_grad, param, rotation_from_quaternion, RadarConfig, SarImage, Scene, N_PARAMS,
    N_SH,
};

/// Gradients of the loss with respect to each primitive's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGradients {
    /// Flat per-primitive layout, see [`crate::types::param`].
    pub params: Vec<[f64; N_PARAMS]>,
    /// Norm of the 2D positional gradient (both planes, normalized device units).
    pub grad2d: Vec<f64>,
    /// Whether the primitive survived culling in this view.
    pub visible: Vec<bool>,
}

impl SceneGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            params: vec![[0.0; N_PARAMS]; n],
            grad2d: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        let p = &self.params[i];
        Vector3::new(p[0], p[1], p[2])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().flatten().all(|v| v.is_finite())
    }
}

/// Outputs of the imaging (splat) stage, indexed like the projected list.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStageGrads {
    pub d_intensity: Vec<f64>,
    pub d_cov2d_img: Vec<Matrix2<f64>>,
    pub d_uv_img: Vec<Vector2<f64>>,
}

/// Outputs of the ray-accumulation stage, indexed like the projected list.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityStageGrads {
    pub d_phase: Vec<f64>,
    /// Gradient with respect to the activated `k_e⁺ + k_e⁻`; it is the same for each term.
    pub d_ke_sum: Vec<f64>,
    pub d_cov2d_comp: Vec<Matrix2<f64>>,
    pub d_uv_comp: Vec<Vector2<f64>>,
}

/// Outputs of the phase-function stage, indexed like the projected list.
#[derive(Debug, Clone, PartialEq)]
pub struct ShStageGrads {
    pub d_sh: Vec<[f64; N_SH]>,
    /// Position gradient through the look direction.
    pub d_position: Vec<Vector3<f64>>,
}

/// `dL/dΣ′ = −A·(dL/dA)·A` for `A = Σ′⁻¹`.
#[inline]
fn conic_to_cov_grad(conic: &Matrix2<f64>, d_conic: &Matrix2<f64>) -> Matrix2<f64> {
    -(conic * d_conic * conic)
}

fn check_image(dl_ds: &SarImage, config: &RadarConfig) -> Result<()> {
    if dl_ds.shape() != (config.n_range, config.n_azimuth) {
        return Err(Error::ShapeMismatch {
            expected: (config.n_range, config.n_azimuth),
            got: dl_ds.shape(),
        });
    }
    Ok(())
}

/// Gradients through `S = Σ β·I`: with respect to each intensity, the imaging
/// covariance and the imaging-plane center.
pub fn grad_image_stage(dl_ds: &SarImage, state: &ForwardState) -> Result<ImageStageGrads> {
    check_image(dl_ds, &state.config)?;
    let projected = &state.projected.gaussians;
    let intensities = &state.intensities.intensities;
    if intensities.len() != projected.len() {
        return Err(Error::State("intensity buffer does not match projections".into()));
    }
    let bins = &state.splat_bins;
    // Per tile slot: [dI, dA11, dA12, dA22, du, dv].
    let per_tile: Vec<Vec<[f64; 6]>> = (0..bins.n_tiles())
        .into_par_iter()
        .map(|tile| {
            let mut acc = vec![[0.0; 6]; bins.tile_keys(tile).len()];
            for_each_splat_in_tile(bins, tile, projected, state.options.cutoff, |pixel, slot, k, delta, beta| {
                let g = dl_ds.data[pixel];
                if g == 0.0 {
                    return;
                }
                let a = &mut acc[slot];
                a[0] += g * beta;
                let d_mahal = -beta * g * intensities[k];
                a[1] += d_mahal * delta.x * delta.x;
                a[2] += d_mahal * delta.x * delta.y;
                a[3] += d_mahal * delta.y * delta.y;
                let conic = &projected[k].conic_img;
                let ad = conic * delta;
                a[4] -= 2.0 * d_mahal * ad.x;
                a[5] -= 2.0 * d_mahal * ad.y;
            });
            acc
        })
        .collect();

    let n = projected.len();
    let mut d_intensity = vec![0.0; n];
    let mut d_conic = vec![Matrix2::zeros(); n];
    let mut d_uv_img = vec![Vector2::zeros(); n];
    for (tile, acc) in per_tile.iter().enumerate() {
        for (&k, a) in bins.tile_keys(tile).iter().zip(acc) {
            d_intensity[k] += a[0];
            d_conic[k] += Matrix2::new(a[1], a[2], a[2], a[3]);
            d_uv_img[k] += Vector2::new(a[4], a[5]);
        }
    }
    let d_cov2d_img = projected
        .iter()
        .zip(&d_conic)
        .map(|(g, dc)| conic_to_cov_grad(&g.conic_img, dc))
        .collect();
    Ok(ImageStageGrads {
        d_intensity,
        d_cov2d_img,
        d_uv_img,
    })
}

/// `dL/dβ` for every (pixel, primitive) pair inside the cutoff, as
/// `(pixel index, scene index, value)`.
pub fn contribution_gradients(dl_ds: &SarImage, state: &ForwardState) -> Result<Vec<(usize, usize, f64)>> {
    check_image(dl_ds, &state.config)?;
    let projected = &state.projected.gaussians;
    let mut out = Vec::new();
    for tile in 0..state.splat_bins.n_tiles() {
        for_each_splat_in_tile(&state.splat_bins, tile, projected, state.options.cutoff, |pixel, _, k, _, _| {
            out.push((pixel, projected[k].index, dl_ds.data[pixel] * state.intensities.intensities[k]));
        });
    }
    Ok(out)
}

/// Gradients through the per-ray transmittance chain.
///
/// For entry `k` on a ray, `dL/da_k = T_k·(−G_k·P_k + Σ_{j>k} G_j·(1−a_j)·P_j·Π_{k<l<j} a_l)`,
/// where the suffix sum is accumulated back to front.
pub fn grad_intensity_stage(d_intensity: &[f64], state: &ForwardState) -> Result<IntensityStageGrads> {
    let projected = &state.projected.gaussians;
    let rays = &state.rays;
    let buf = &state.intensities;
    if d_intensity.len() != projected.len() || buf.weights.len() != rays.entries.len() {
        return Err(Error::State("ray buffers do not match projections".into()));
    }

    // Per entry: [dP, dκ, dA11, dA12, dA22, du, dv].
    let per_ray: Vec<Vec<[f64; 7]>> = (0..rays.n_rays())
        .into_par_iter()
        .map(|cell| {
            let start = rays.offsets[cell];
            let list = rays.ray(cell);
            let center = rays.center(cell);
            let mut out = vec![[0.0; 7]; list.len()];
            let mut suffix = 0.0;
            for pos in (0..list.len()).rev() {
                let k = list[pos];
                let g = &projected[k];
                let e = start + pos;
                let w = buf.weights[e];
                let t = buf.transmittance[e];
                let optical = g.ke_sum * w;
                let a = (-optical).exp();
                let absorbed = -(-optical).exp_m1();
                let up = d_intensity[k];

                let d_a = t * (-up * g.phase_value + suffix);
                suffix = up * absorbed * g.phase_value + a * suffix;

                let d_w = d_a * (-g.ke_sum * a);
                let d_mahal = -w * d_w;
                let delta = center - g.uv_comp;
                let ad = g.conic_comp * delta;
                out[pos] = [
                    up * t * absorbed,
                    d_a * (-w * a),
                    d_mahal * delta.x * delta.x,
                    d_mahal * delta.x * delta.y,
                    d_mahal * delta.y * delta.y,
                    -2.0 * d_mahal * ad.x,
                    -2.0 * d_mahal * ad.y,
                ];
            }
            out
        })
        .collect();

    let n = projected.len();
    let mut d_phase = vec![0.0; n];
    let mut d_ke_sum = vec![0.0; n];
    let mut d_conic = vec![Matrix2::zeros(); n];
    let mut d_uv_comp = vec![Vector2::zeros(); n];
    for (&k, o) in rays.entries.iter().zip(per_ray.iter().flatten()) {
        d_phase[k] += o[0];
        d_ke_sum[k] += o[1];
        d_conic[k] += Matrix2::new(o[2], o[3], o[3], o[4]);
        d_uv_comp[k] += Vector2::new(o[5], o[6]);
    }
    let d_cov2d_comp = projected
        .iter()
        .zip(&d_conic)
        .map(|(g, dc)| conic_to_cov_grad(&g.conic_comp, dc))
        .collect();
    Ok(IntensityStageGrads {
        d_phase,
        d_ke_sum,
        d_cov2d_comp,
        d_uv_comp,
    })
}

/// `dL/dc = dL/dP·Y(d)` where the unclamped phase is positive, zero otherwise;
/// also the position gradient through the look direction.
pub fn grad_sh_stage(d_phase: &[f64], scene: &Scene, state: &ForwardState) -> ShStageGrads {
    let radar = state.config.radar_position();
    let (d_sh, d_position) = state
        .projected
        .gaussians
        .iter()
        .zip(d_phase)
        .map(|(g, &dp)| {
            if g.phase_unclamped <= 0.0 || dp == 0.0 {
                return ([0.0; N_SH], Vector3::zeros());
            }
            let prim = &scene.primitives[g.index];
            let v = prim.position - radar;
            let basis = sh::basis(&v.normalize());
            let d_sh = std::array::from_fn(|i| dp * basis[i]);
            (d_sh, sh::unclamped_grad_wrt_direction(&prim.sh_coeffs, &v) * dp)
        })
        .unzip();
    ShStageGrads { d_sh, d_position }
}

/// Gradient of a unit-quaternion rotation matrix, pulled back to the raw quaternion.
fn quaternion_grad(q: &nalgebra::Quaternion<f64>, g: &Matrix3<f64>) -> [f64; 4] {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    let gw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)] + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let dot = w * gw + x * gx + y * gy + z * gz;
    [(gw - w * dot) / n, (gx - x * dot) / n, (gy - y * dot) / n, (gz - z * dot) / n]
}

/// Chains plane-space gradients back to world-space parameters.
pub fn grad_geometry_stage(
    image: &ImageStageGrads,
    intensity: &IntensityStageGrads,
    phase: &ShStageGrads,
    scene: &Scene,
    state: &ForwardState,
) -> SceneGradients {
    let config = &state.config;
    let rot = radar_rotation(config.azimuth_deg, config.elevation_deg);
    let t_comp = computation_jacobian(config) * rot;
    let t_img = imaging_jacobian(config) * rot;
    let ndc_comp = Vector2::new(config.ray_grid.0 as f64, config.ray_grid.1 as f64) * 0.5;
    let ndc_img = Vector2::new(config.n_azimuth as f64, config.n_range as f64) * 0.5;

    let mut out = SceneGradients::zeros(scene.len());
    for (k, g) in state.projected.gaussians.iter().enumerate() {
        let i = g.index;
        let prim = &scene.primitives[i];
        let p = &mut out.params[i];
        out.visible[i] = true;

        let d_cov3d = t_comp.transpose() * intensity.d_cov2d_comp[k] * t_comp
            + t_img.transpose() * image.d_cov2d_img[k] * t_img;
        let d_cov3d = (d_cov3d + d_cov3d.transpose()) * 0.5;
        let rq = rotation_from_quaternion(&prim.rotation);
        let scales = prim.log_scales.map(f64::exp);
        let m = rq * Matrix3::from_diagonal(&scales);
        let d_m = 2.0 * d_cov3d * m;
        let d_rq = d_m * Matrix3::from_diagonal(&scales);
        for j in 0..3 {
            let d_s: f64 = (0..3).map(|r| d_m[(r, j)] * rq[(r, j)]).sum();
            p[param::LOG_SCALES + j] = d_s * scales[j];
        }
        p[param::ROTATION..param::ROTATION + 4].copy_from_slice(&quaternion_grad(&prim.rotation, &d_rq));

        let d_pos = t_comp.transpose() * intensity.d_uv_comp[k]
            + t_img.transpose() * image.d_uv_img[k]
            + phase.d_position[k];
        p[param::POSITION..param::POSITION + 3].copy_from_slice(d_pos.as_slice());

        p[param::SH..param::SH + N_SH].copy_from_slice(&phase.d_sh[k]);
        let d_kappa = intensity.d_ke_sum[k];
        p[param::KE_FORWARD] = d_kappa * activate_extinction_grad(prim.ke_forward_raw);
        p[param::KE_BACKWARD] = d_kappa * activate_extinction_grad(prim.ke_backward_raw);

        let gi = image.d_uv_img[k].component_mul(&ndc_img);
        let gc = intensity.d_uv_comp[k].component_mul(&ndc_comp);
        out.grad2d[i] = (gi.norm_squared() + gc.norm_squared()).sqrt();
    }
    out
}

/// Gradients of a scalar loss with respect to every primitive parameter,
/// given `dL/dS` and the buffers of the matching forward pass.
pub fn backward(scene: &Scene, config: &RadarConfig, state: &ForwardState, dl_ds: &SarImage) -> Result<SceneGradients> {
    state.check_matches(scene, config)?;
    let image = grad_image_stage(dl_ds, state)?;
    let intensity = grad_intensity_stage(&image.d_intensity, state)?;
    let phase = grad_sh_stage(&intensity.d_phase, scene, state);
    let grads = grad_geometry_stage(&image, &intensity, &phase, scene, state);
    if !grads.is_finite() {
        let i = grads
            .params
            .iter()
            .position(|p| p.iter().any(|v| !v.is_finite()))
            .unwrap_or(0);
        return Err(Error::NumericalOverflow {
            index: i,
            what: "non-finite gradient".into(),
        });
    }
    Ok(grads)
}

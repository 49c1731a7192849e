use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::geometry::{
    computation_jacobian, computation_pixel, imaging_jacobian, imaging_pixel, project_covariance,
    radar_rotation, world_to_radar, COV_REGULARIZATION,
};
use crate::sh::eval_phase_function;
use crate::types::{RadarConfig, SarImage, Scene};

struct Flat {
    uv_comp: Vector2<f64>,
    uv_img: Vector2<f64>,
    depth: f64,
    inv_comp: Matrix2<f64>,
    inv_img: Matrix2<f64>,
    phase: f64,
    ke_sum: f64,
}

fn weight(delta: Vector2<f64>, inv: &Matrix2<f64>) -> f64 {
    (-(delta.transpose() * inv * delta)[0]).exp()
}

/// Straight nested loops over every (ray, primitive) and (pixel, primitive)
/// pair: no culling, no tiling. Intended for small scenes as a check on [`super::render`].
pub fn render_reference(scene: &Scene, config: &RadarConfig) -> Result<SarImage> {
    config.validate()?;
    let rot = radar_rotation(config.azimuth_deg, config.elevation_deg);
    let radar = config.radar_position();
    let mut flat = Vec::with_capacity(scene.len());
    for p in &scene.primitives {
        let cov = p.covariance()?;
        let x_r = world_to_radar(&p.position, config);
        let cov_c = project_covariance(&cov, &rot, &computation_jacobian(config), COV_REGULARIZATION)?;
        let cov_i = project_covariance(&cov, &rot, &imaging_jacobian(config), COV_REGULARIZATION)?;
        flat.push(Flat {
            uv_comp: computation_pixel(&x_r, config),
            uv_img: imaging_pixel(&x_r, config),
            depth: x_r.z,
            inv_comp: cov_c.try_inverse().expect("positive-definite"),
            inv_img: cov_i.try_inverse().expect("positive-definite"),
            phase: eval_phase_function(&p.sh_coeffs, &(p.position - radar).normalize()),
            ke_sum: p.extinction_sum(),
        });
    }

    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| flat[a].depth.total_cmp(&flat[b].depth).then(a.cmp(&b)));

    let mut intensity = vec![0.0; flat.len()];
    let (cols, rows) = config.ray_grid;
    for row in 0..rows {
        for col in 0..cols {
            let center = Vector2::new(col as f64, row as f64);
            let mut transmittance = 1.0;
            for &i in &order {
                let f = &flat[i];
                let w = weight(center - f.uv_comp, &f.inv_comp);
                let absorbed = 1.0 - (-f.ke_sum * w).exp();
                intensity[i] += transmittance * absorbed * f.phase;
                transmittance *= 1.0 - absorbed;
            }
        }
    }

    let mut img = SarImage::for_config(config);
    for row in 0..config.n_range {
        for col in 0..config.n_azimuth {
            let pixel = Vector2::new(col as f64, row as f64);
            let s: f64 = flat
                .iter()
                .zip(&intensity)
                .map(|(f, i)| weight(pixel - f.uv_img, &f.inv_img) * i)
                .sum();
            img.set(row, col, s);
        }
    }
    Ok(img)
}

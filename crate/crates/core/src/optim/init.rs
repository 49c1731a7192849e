use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sh::Y00;
use crate::types::{inverse_activate_extinction, GaussianPrimitive, Scene};

/// Activated DC phase of freshly initialized primitives.
pub const INIT_PHASE: f64 = 0.1;
/// Activated extinction per direction of freshly initialized primitives.
pub const INIT_EXTINCTION: f64 = 0.5;

/// `n` isotropic primitives uniform on the upper hemisphere of `radius`
/// around the origin, each with scale `radius/∛n`.
pub fn init_hemisphere(n: usize, radius: f64, seed: u64) -> Result<Scene> {
    if n == 0 || !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "hemisphere init needs n ≥ 1 and radius > 0, got n = {n}, radius = {radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = radius / (n as f64).cbrt();
    let ke_raw = inverse_activate_extinction(INIT_EXTINCTION);
    let prims = (0..n)
        .map(|_| {
            // Height is uniform on a spherical zone (Archimedes), azimuth uniform.
            let z: f64 = rng.gen_range(0.0..=1.0);
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let dir = Vector3::new(rho * a.cos(), rho * a.sin(), z);
            GaussianPrimitive::isotropic(dir.normalize() * radius, scale, INIT_PHASE / Y00, ke_raw)
        })
        .collect();
    let mut scene = Scene::new(prims);
    scene.metadata.insert("generator".into(), format!("hemisphere n={n} r={radius}"));
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_upper_hemisphere() {
        let s = init_hemisphere(15_000, 2.5, 3).unwrap();
        assert_eq!(s.len(), 15_000);
        for p in &s.primitives {
            assert!((p.position.norm() - 2.5).abs() <= 1e-12);
            assert!(p.position.z >= 0.0);
            assert!(p.extinction_sum() > 0.0 && p.dc_phase() > 0.0);
        }
        assert!((s.primitives[0].max_scale() - 2.5 / 15_000f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn mean_height_is_half_the_radius() {
        let s = init_hemisphere(100_000, 2.0, 0).unwrap();
        let mean_z = s.primitives.iter().map(|p| p.position.z).sum::<f64>() / s.len() as f64;
        assert!((mean_z - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(init_hemisphere(0, 1.0, 0).is_err());
        assert!(init_hemisphere(10, 0.0, 0).is_err());
    }
}

//! Real spherical harmonics up to degree 3, orthonormal on the unit sphere,
//! indexed `l² + l + m` without the Condon–Shortley phase.

use nalgebra::{Matrix3, Vector3};

use crate::types::N_SH;

pub const Y00: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2A: f64 = 1.092_548_430_592_079_2;
const C2B: f64 = 0.315_391_565_252_520_05;
const C2C: f64 = 0.546_274_215_296_039_6;
const C3A: f64 = 0.590_043_589_926_643_5;
const C3B: f64 = 2.890_611_442_640_554;
const C3C: f64 = 0.457_045_799_464_465_8;
const C3D: f64 = 0.373_176_332_590_115_4;
const C3E: f64 = 1.445_305_721_320_277;

/// Highest supported degree.
pub const MAX_DEGREE: usize = 3;

/// Number of coefficients active at `degree`.
pub fn coeff_count(degree: usize) -> usize {
    (degree.min(MAX_DEGREE) + 1).pow(2)
}

/// Basis values at a unit direction.
pub fn basis(d: &Vector3<f64>) -> [f64; N_SH] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        Y00,
        C1 * y,
        C1 * z,
        C1 * x,
        C2A * x * y,
        C2A * y * z,
        C2B * (2.0 * zz - xx - yy),
        C2A * x * z,
        C2C * (xx - yy),
        C3A * y * (3.0 * xx - yy),
        C3B * x * y * z,
        C3C * y * (4.0 * zz - xx - yy),
        C3D * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3C * x * (4.0 * zz - xx - yy),
        C3E * z * (xx - yy),
        C3A * x * (xx - 3.0 * yy),
    ]
}

/// Partial derivatives of each basis polynomial with respect to `(x, y, z)`.
///
/// Only the component tangent to the sphere is meaningful; callers project
/// through the normalization Jacobian.
pub fn basis_gradients(d: &Vector3<f64>) -> [Vector3<f64>; N_SH] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let v = Vector3::new;
    [
        v(0.0, 0.0, 0.0),
        v(0.0, C1, 0.0),
        v(0.0, 0.0, C1),
        v(C1, 0.0, 0.0),
        v(C2A * y, C2A * x, 0.0),
        v(0.0, C2A * z, C2A * y),
        v(-2.0 * C2B * x, -2.0 * C2B * y, 4.0 * C2B * z),
        v(C2A * z, 0.0, C2A * x),
        v(2.0 * C2C * x, -2.0 * C2C * y, 0.0),
        v(6.0 * C3A * x * y, C3A * (3.0 * xx - 3.0 * yy), 0.0),
        v(C3B * y * z, C3B * x * z, C3B * x * y),
        v(-2.0 * C3C * x * y, C3C * (4.0 * zz - xx - 3.0 * yy), 8.0 * C3C * y * z),
        v(-6.0 * C3D * x * z, -6.0 * C3D * y * z, C3D * (6.0 * zz - 3.0 * xx - 3.0 * yy)),
        v(C3C * (4.0 * zz - 3.0 * xx - yy), -2.0 * C3C * x * y, 8.0 * C3C * x * z),
        v(2.0 * C3E * x * z, -2.0 * C3E * y * z, C3E * (xx - yy)),
        v(C3A * (3.0 * xx - 3.0 * yy), -6.0 * C3A * x * y, 0.0),
    ]
}

/// Unclamped phase value `Σ c·Y(d)`.
pub fn eval_unclamped(coeffs: &[f64; N_SH], d: &Vector3<f64>) -> f64 {
    basis(d).iter().zip(coeffs).map(|(y, c)| y * c).sum()
}

/// Phase function `P = max(0, Σ c·Y(d))` for a unit look direction.
pub fn eval_phase_function(coeffs: &[f64; N_SH], look_dir: &Vector3<f64>) -> f64 {
    eval_unclamped(coeffs, look_dir).max(0.0)
}

/// Gradient of the unclamped phase value with respect to the unnormalized
/// direction vector `v` (where `d = v / |v|`).
pub fn unclamped_grad_wrt_direction(coeffs: &[f64; N_SH], v: &Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    let d = v / n;
    let grads = basis_gradients(&d);
    let g_d: Vector3<f64> = grads.iter().zip(coeffs).map(|(g, c)| g * *c).sum();
    let proj = (Matrix3::identity() - d * d.transpose()) / n;
    proj * g_d
}

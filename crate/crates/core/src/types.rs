//! Scene representation and the containers shared by every stage.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of scalar parameters per primitive.
pub const N_PARAMS: usize = 28;
/// Number of real SH coefficients (degrees 0..=3).
pub const N_SH: usize = 16;

/// Offsets of each parameter group inside the flat per-primitive vector.
pub mod param {
    pub const POSITION: usize = 0;
    pub const ROTATION: usize = 3;
    pub const LOG_SCALES: usize = 7;
    pub const SH: usize = 10;
    pub const KE_FORWARD: usize = 26;
    pub const KE_BACKWARD: usize = 27;
}

/// One anisotropic Gaussian scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    /// Unit quaternion, `(w, i, j, k)`.
    pub rotation: Quaternion<f64>,
    pub log_scales: Vector3<f64>,
    pub sh_coeffs: [f64; N_SH],
    pub ke_forward_raw: f64,
    pub ke_backward_raw: f64,
}

impl GaussianPrimitive {
    /// Isotropic primitive with a DC-only phase function.
    pub fn isotropic(position: Vector3<f64>, scale: f64, dc: f64, ke_raw: f64) -> Self {
        let mut sh_coeffs = [0.0; N_SH];
        sh_coeffs[0] = dc;
        Self {
            position,
            rotation: Quaternion::identity(),
            log_scales: Vector3::repeat(scale.ln()),
            sh_coeffs,
            ke_forward_raw: ke_raw,
            ke_backward_raw: ke_raw,
        }
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        covariance_from_params(&self.rotation, &self.log_scales)
    }

    /// k_e⁺ + k_e⁻ after activation.
    pub fn extinction_sum(&self) -> f64 {
        activate_extinction(self.ke_forward_raw) + activate_extinction(self.ke_backward_raw)
    }

    pub fn max_scale(&self) -> f64 {
        self.log_scales.max().exp()
    }

    /// Activated DC phase term, `max(0, c₀·Y₀₀)`.
    pub fn dc_phase(&self) -> f64 {
        (self.sh_coeffs[0] * crate::sh::Y00).max(0.0)
    }

    /// Single-pass backscatter strength `(1 − e^{−(k_e⁺+k_e⁻)})·P_dc`. A
    /// nearly transparent primitive returns almost nothing whatever its phase.
    pub fn backscatter(&self) -> f64 {
        -(-self.extinction_sum()).exp_m1() * self.dc_phase()
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }

    pub fn to_params(&self) -> [f64; N_PARAMS] {
        let mut p = [0.0; N_PARAMS];
        p[0..3].copy_from_slice(self.position.as_slice());
        p[3] = self.rotation.w;
        p[4] = self.rotation.i;
        p[5] = self.rotation.j;
        p[6] = self.rotation.k;
        p[7..10].copy_from_slice(self.log_scales.as_slice());
        p[10..26].copy_from_slice(&self.sh_coeffs);
        p[26] = self.ke_forward_raw;
        p[27] = self.ke_backward_raw;
        p
    }

    pub fn from_params(p: &[f64; N_PARAMS]) -> Self {
        let mut sh_coeffs = [0.0; N_SH];
        sh_coeffs.copy_from_slice(&p[10..26]);
        Self {
            position: Vector3::new(p[0], p[1], p[2]),
            rotation: Quaternion::new(p[3], p[4], p[5], p[6]),
            log_scales: Vector3::new(p[7], p[8], p[9]),
            sh_coeffs,
            ke_forward_raw: p[26],
            ke_backward_raw: p[27],
        }
    }
}

/// Rotation matrix of `q / |q|`.
pub fn rotation_from_quaternion(q: &Quaternion<f64>) -> Matrix3<f64> {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `R_q · diag(exp(log_scales))² · R_qᵀ`, symmetrized.
pub fn covariance_from_params(
    rotation: &Quaternion<f64>,
    log_scales: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    let finite = rotation.coords.iter().chain(log_scales.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(Error::InvalidParameter(format!(
            "non-finite rotation {:?} or log-scales {:?}",
            rotation.coords.as_slice(),
            log_scales.as_slice()
        )));
    }
    if rotation.norm() == 0.0 {
        return Err(Error::InvalidParameter("zero quaternion".into()));
    }
    let r = rotation_from_quaternion(rotation);
    let m = r * Matrix3::from_diagonal(&log_scales.map(f64::exp));
    let cov = m * m.transpose();
    Ok((cov + cov.transpose()) * 0.5)
}

/// Softplus, `ln(1 + eˣ)`, evaluated without overflow.
pub fn activate_extinction(raw: f64) -> f64 {
    raw.max(0.0) + (-raw.abs()).exp().ln_1p()
}

/// Derivative of [`activate_extinction`].
pub fn activate_extinction_grad(raw: f64) -> f64 {
    if raw >= 0.0 {
        1.0 / (1.0 + (-raw).exp())
    } else {
        let e = raw.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus for `value > 0`.
pub fn inverse_activate_extinction(value: f64) -> f64 {
    if value > 30.0 {
        value
    } else {
        value.exp_m1().ln()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub primitives: Vec<GaussianPrimitive>,
    pub metadata: BTreeMap<String, String>,
}

impl Scene {
    pub fn new(primitives: Vec<GaussianPrimitive>) -> Self {
        Self {
            primitives,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidParameter(format!("primitive {i} has non-finite parameters")));
            }
            if p.rotation.norm() == 0.0 {
                return Err(Error::InvalidParameter(format!("primitive {i} has a zero quaternion")));
            }
        }
        Ok(())
    }

    /// Primitive centers weighted by their DC phase term.
    pub fn to_point_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.primitives.iter().map(|p| p.position).collect(),
            weights: Some(self.primitives.iter().map(|p| p.dc_phase()).collect()),
        }
    }
}

/// One radar view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub azimuth_deg: f64,
    /// Grazing angle.
    pub elevation_deg: f64,
    pub altitude_m: f64,
    pub range_res_m: f64,
    pub azimuth_res_m: f64,
    pub n_range: usize,
    pub n_azimuth: usize,
    /// Computation-plane grid `(azimuth cells, cross-range cells)`.
    pub ray_grid: (usize, usize),
}

impl RadarConfig {
    /// View with a one-ray-per-pixel computation grid.
    pub fn new(
        azimuth_deg: f64,
        elevation_deg: f64,
        altitude_m: f64,
        resolution_m: f64,
        n_range: usize,
        n_azimuth: usize,
    ) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
            altitude_m,
            range_res_m: resolution_m,
            azimuth_res_m: resolution_m,
            n_range,
            n_azimuth,
            ray_grid: (n_azimuth, n_range),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let finite = [
            self.azimuth_deg,
            self.elevation_deg,
            self.altitude_m,
            self.range_res_m,
            self.azimuth_res_m,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("radar config has non-finite fields".into());
        }
        if !(self.elevation_deg > 0.0 && self.elevation_deg < 90.0) {
            return bad(format!("elevation {} outside (0, 90)", self.elevation_deg));
        }
        if self.range_res_m <= 0.0 || self.azimuth_res_m <= 0.0 {
            return bad("resolutions must be positive".into());
        }
        if self.n_range == 0 || self.n_azimuth == 0 || self.ray_grid.0 == 0 || self.ray_grid.1 == 0 {
            return bad("image and ray-grid dimensions must be at least 1".into());
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.elevation_deg.to_radians()
    }

    pub fn phi(&self) -> f64 {
        self.azimuth_deg.to_radians()
    }

    /// Radar position in the world frame, with the scene origin on boresight.
    pub fn radar_position(&self) -> Vector3<f64> {
        let (st, ct) = self.theta().sin_cos();
        let (sp, cp) = self.phi().sin_cos();
        let ground = self.altitude_m * ct / st;
        Vector3::new(ground * cp, -ground * sp, self.altitude_m)
    }

    /// Slant range from the radar to the scene origin.
    pub fn slant_range(&self) -> f64 {
        self.altitude_m / self.theta().sin()
    }

    /// Ground-range extent of the image, used as the illumination extent.
    pub fn illumination_extent(&self) -> f64 {
        self.range_res_m * self.n_range as f64
    }
}

/// Non-negative scattered-energy raster, row-major, rows along range.
#[derive(Debug, Clone, PartialEq)]
pub struct SarImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl SarImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: (height, width),
                got: (data.len(), 1),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn for_config(config: &RadarConfig) -> Self {
        Self::zeros(config.n_range, config.n_azimuth)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub(crate) fn check_same_shape(&self, other: &SarImage) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Optional per-point weight (activated DC phase term).
    pub weights: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points, weights: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Keep points whose weight is at least `min_weight`; unweighted clouds are returned as-is.
    pub fn filter_by_weight(&self, min_weight: f64) -> Self {
        match &self.weights {
            None => self.clone(),
            Some(w) => {
                let keep: Vec<usize> = (0..self.len()).filter(|&i| w[i] >= min_weight).collect();
                self.select(&keep)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub config: RadarConfig,
    pub image: SarImage,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewDataset {
    pub views: Vec<View>,
}

impl ViewDataset {
    pub fn push(&mut self, config: RadarConfig, image: SarImage, split: Split) -> Result<()> {
        if image.shape() != (config.n_range, config.n_azimuth) {
            return Err(Error::ShapeMismatch {
                expected: (config.n_range, config.n_azimuth),
                got: image.shape(),
            });
        }
        self.views.push(View { config, image, split });
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &View> {
        self.views.iter().filter(move |v| v.split == split)
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

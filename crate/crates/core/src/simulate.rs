//! Multi-view synthetic datasets rendered from a known scene.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{render, RenderOptions};
use crate::types::{RadarConfig, SarImage, Scene, Split, ViewDataset};

/// Views on an azimuth × elevation grid sharing one sensor geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    pub altitude_m: f64,
    pub range_res_m: f64,
    pub azimuth_res_m: f64,
    pub n_range: usize,
    pub n_azimuth: usize,
    /// Azimuths that are a multiple of this go to the training split.
    pub train_azimuth_step_deg: f64,
    /// Ray-grid cell size on the computation plane, meters. `None` keeps one
    /// ray per image cell.
    #[serde(default)]
    pub ray_cell_m: Option<f64>,
}

impl Sweep {
    /// 15° azimuth steps at 15°, 45° and 75°, training on multiples of 45°.
    pub fn standard(n_range: usize, n_azimuth: usize, resolution_m: f64) -> Self {
        Self {
            azimuths_deg: (0..24).map(|k| 15.0 * k as f64).collect(),
            elevations_deg: vec![15.0, 45.0, 75.0],
            altitude_m: 10_000.0,
            range_res_m: resolution_m,
            azimuth_res_m: resolution_m,
            n_range,
            n_azimuth,
            train_azimuth_step_deg: 45.0,
            ray_cell_m: None,
        }
    }

    pub fn split_of(&self, azimuth_deg: f64) -> Split {
        let k = azimuth_deg / self.train_azimuth_step_deg;
        if (k - k.round()).abs() < 1e-9 {
            Split::Train
        } else {
            Split::Test
        }
    }

    /// Elevation-major list of views.
    pub fn views(&self) -> Result<Vec<(RadarConfig, Split)>> {
        if self.azimuths_deg.is_empty() || self.elevations_deg.is_empty() {
            return Err(Error::Empty("sweep has no azimuths or no elevations".into()));
        }
        if !(self.train_azimuth_step_deg > 0.0) {
            return Err(Error::InvalidParameter("train azimuth step must be positive".into()));
        }
        let mut out = Vec::with_capacity(self.azimuths_deg.len() * self.elevations_deg.len());
        for &el in &self.elevations_deg {
            for &az in &self.azimuths_deg {
                let mut cfg = RadarConfig::new(az, el, self.altitude_m, self.range_res_m, self.n_range, self.n_azimuth);
                cfg.azimuth_res_m = self.azimuth_res_m;
                if let Some(cell) = self.ray_cell_m {
                    cfg.ray_grid = ray_grid_for_cell(&cfg, cell)?;
                }
                cfg.validate()?;
                out.push((cfg, self.split_of(az)));
            }
        }
        Ok(out)
    }
}

/// Ray-grid dimensions giving cells of about `cell` meters on the computation plane.
pub fn ray_grid_for_cell(config: &RadarConfig, cell: f64) -> Result<(usize, usize)> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::InvalidParameter(format!("ray cell must be positive, got {cell}")));
    }
    let width = config.azimuth_res_m * config.n_azimuth as f64;
    let height = config.range_res_m * config.n_range as f64 * config.theta().tan();
    Ok(((width / cell).ceil().max(1.0) as usize, (height / cell).ceil().max(1.0) as usize))
}

/// Renders `scene` in every view and divides all images by their common
/// maximum. Returns the dataset and that maximum.
pub fn simulate(scene: &Scene, views: &[(RadarConfig, Split)], opts: &RenderOptions) -> Result<(ViewDataset, f64)> {
    let images: Vec<SarImage> = views
        .par_iter()
        .map(|(cfg, _)| render(scene, cfg, opts))
        .collect::<Result<_>>()?;
    let max = images.iter().map(SarImage::max).fold(0.0, f64::max);
    let k = if max > 0.0 { 1.0 / max } else { 1.0 };
    let mut ds = ViewDataset::default();
    for ((cfg, split), img) in views.iter().zip(images) {
        ds.push(cfg.clone(), img.scaled(k), *split)?;
    }
    Ok((ds, max))
}

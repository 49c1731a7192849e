//! Forward rasterizer, its naive reference, and the analytic backward pass.

mod backward;
mod forward;
mod reference;
mod tiles;

pub use backward::{
    backward, contribution_gradients, grad_geometry_stage, grad_image_stage, grad_intensity_stage,
    grad_sh_stage, ImageStageGrads, IntensityStageGrads, SceneGradients, ShStageGrads,
};
pub use forward::{
    build_ray_lists, compute_intensities, gaussian_weight, render, render_with_state, splat_image,
    weight_from_conic, ForwardState, IntensityBuffer, RayLists,
};
pub use reference::render_reference;
pub use tiles::TileBins;

/// Knobs shared by the forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    /// Largest Mahalanobis distance `Δᵀ·Σ′⁻¹·Δ` at which a primitive still
    /// touches a ray or pixel. `9` is the 3σ footprint; `f64::INFINITY`
    /// disables culling.
    pub cutoff: f64,
    /// Edge length of the square tiles used for binning.
    pub tile_size: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            cutoff: 9.0,
            tile_size: 16,
        }
    }
}

impl RenderOptions {
    /// Options with culling disabled, for comparisons against the reference renderer.
    pub fn exact() -> Self {
        Self {
            cutoff: f64::INFINITY,
            ..Self::default()
        }
    }
}

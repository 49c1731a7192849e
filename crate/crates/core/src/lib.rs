//! Differentiable Gaussian-splatting renderer for synthetic aperture radar
//! intensity images, and the tooling to invert multi-view images back into
//! 3D scatterer clouds.

pub mod bands;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod scene_gen;
pub mod sh;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use raster::{backward, render, render_reference, render_with_state, RenderOptions, SceneGradients};
pub use types::{GaussianPrimitive, PointCloud, RadarConfig, SarImage, Scene, Split, View, ViewDataset};

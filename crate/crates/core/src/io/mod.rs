//! Scene, point-cloud, image and dataset files.

mod dataset;
mod image_io;
mod ply;

pub use dataset::{load_dataset, parse_view_spec, save_dataset, write_jsonl, ViewRecord, MANIFEST_NAME};
pub use image_io::{
    load_image, load_image_scaled, read_sidecar, save_image, sidecar_path, ImageSidecar, Normalization,
};
pub use ply::{load_point_cloud, load_scene, save_points, save_scene, SCENE_PROPERTIES};

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Reads and deserializes a TOML document.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

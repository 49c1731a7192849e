//! 16-bit grayscale PNG and PGM, with a JSON sidecar recording the scale.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SarImage;

const FULL: f64 = 65535.0;

/// How linear intensities are mapped to 16-bit codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Normalization {
    /// `code = round(65535 · clamp(v / max_value, 0, 1))`.
    FixedMax { max_value: f64 },
    /// Like `FixedMax` with the image's own maximum.
    PerImageMax,
}

/// Contents of the sidecar written next to every saved image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub normalization: Normalization,
    /// Intensity that maps to code 65535.
    pub max_value: f64,
    pub width: usize,
    pub height: usize,
}

/// `img.png` → `img.png.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn image_err(path: &Path, message: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Writes a 16-bit PNG (or binary PGM for a `.pgm` extension) and its sidecar.
pub fn save_image(img: &SarImage, path: &Path, normalization: Normalization) -> Result<()> {
    if img.data.iter().any(|v| !v.is_finite()) {
        return Err(image_err(path, "image has non-finite pixels"));
    }
    let max_value = match normalization {
        Normalization::FixedMax { max_value } if max_value > 0.0 && max_value.is_finite() => max_value,
        Normalization::FixedMax { max_value } => {
            return Err(Error::InvalidParameter(format!("normalization max must be positive, got {max_value}")))
        }
        Normalization::PerImageMax => {
            let m = img.max();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let codes: Vec<u16> = img
        .data
        .iter()
        .map(|v| ((v / max_value).clamp(0.0, 1.0) * FULL).round() as u16)
        .collect();
    if is_pgm(path) {
        let mut bytes = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
        for c in &codes {
            bytes.extend_from_slice(&c.to_be_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    } else {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(img.width as u32, img.height as u32, codes).ok_or_else(|| image_err(path, "bad size"))?;
        buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))?;
    }
    let sidecar = ImageSidecar {
        normalization,
        max_value,
        width: img.width,
        height: img.height,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| image_err(&side, e))?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

fn pgm_tokens(bytes: &[u8], count: usize) -> Option<(Vec<usize>, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return None;
        }
        out.push(std::str::from_utf8(&bytes[start..i]).ok()?.parse().ok()?);
    }
    Some((out, i))
}

fn read_pgm(path: &Path, bytes: &[u8]) -> Result<SarImage> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(image_err(path, "not a PGM (expected P2 or P5)")),
    };
    let (head, end) = pgm_tokens(&bytes[2..], 3).ok_or_else(|| image_err(path, "bad PGM header"))?;
    let (w, h, maxval) = (head[0], head[1], head[2]);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(image_err(path, format!("bad PGM header {w}×{h} max {maxval}")));
    }
    let n = w * h;
    let values: Vec<f64> = if binary {
        let data = &bytes[2 + end + 1..];
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        if data.len() < need {
            return Err(image_err(path, "PGM data is truncated"));
        }
        if wide {
            data.chunks_exact(2).take(n).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
        } else {
            data[..n].iter().map(|&c| c as f64).collect()
        }
    } else {
        let (v, _) = pgm_tokens(&bytes[2 + end..], n).ok_or_else(|| image_err(path, "PGM data is truncated"))?;
        v.into_iter().map(|c| c as f64).collect()
    };
    let scale = maxval as f64;
    SarImage::from_vec(h, w, values.into_iter().map(|v| (v / scale).min(1.0)).collect())
}

/// Decodes a grayscale PNG or PGM to linear intensity in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<SarImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        return read_pgm(path, &bytes);
    }
    let img = image::load_from_memory(&bytes).map_err(|e| image_err(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    SarImage::from_vec(h as usize, w as usize, img.into_raw().into_iter().map(|c| c as f64 / FULL).collect())
}

pub fn read_sidecar(path: &Path) -> Result<Option<ImageSidecar>> {
    let side = sidecar_path(path);
    match std::fs::read_to_string(&side) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Parse(format!("{}: {e}", side.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(side, e)),
    }
}

/// [`load_image`] rescaled to the intensities that were saved, when a sidecar exists.
pub fn load_image_scaled(path: &Path) -> Result<SarImage> {
    let img = load_image(path)?;
    Ok(match read_sidecar(path)? {
        Some(s) => img.scaled(s.max_value),
        None => img,
    })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene_gen::{CuboidSpec, Face, FacePatch};
use crate::types::PointCloud;

/// Area-weighted uniform samples on the outer surface of a union of cuboids.
///
/// Faces are drawn in proportion to their area; samples that fall inside
/// another part are redrawn. Bottom faces are skipped unless `include_bottom`.
pub fn sample_target_points(parts: &[CuboidSpec], n: usize, seed: u64, include_bottom: bool) -> Result<PointCloud> {
    if parts.is_empty() {
        return Err(Error::Empty("no cuboids to sample".into()));
    }
    let mut faces: Vec<(usize, FacePatch)> = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        part.validate()?;
        for face in Face::ALL {
            if face == Face::Bottom && !include_bottom {
                continue;
            }
            faces.push((i, part.face(face)));
        }
    }
    let cumulative: Vec<f64> = faces
        .iter()
        .scan(0.0, |acc, (_, f)| {
            *acc += f.area();
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap_or(&0.0);
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("target has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::InvalidParameter("target surface is entirely buried".into()));
        }
        let pick = rng.gen::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= pick).min(faces.len() - 1);
        let (owner, patch) = &faces[k];
        let p = patch.at(rng.gen(), rng.gen());
        let buried = parts.iter().enumerate().any(|(j, other)| j != *owner && other.contains(&p));
        if !buried {
            points.push(p);
        }
    }
    Ok(PointCloud::new(points))
}

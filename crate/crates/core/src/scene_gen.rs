//! Synthetic targets: cuboid buildings over a ground patch, and composites of
//! cuboids standing in for vehicles.
//!
//! Every face is sampled on a jittered grid at spacing `1/√density`, and each
//! sample becomes an isotropic Gaussian whose scale equals the spacing.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::Y00;
use crate::types::{GaussianPrimitive, Scene};

/// Raw extinction default; softplus(2) ≈ 2.13 per direction, so a primitive
/// hit at its center absorbs ~98% of the beam.
pub const DEFAULT_KE_RAW: f64 = 2.0;

fn default_ke_raw() -> f64 {
    DEFAULT_KE_RAW
}

fn default_roof_dc() -> f64 {
    0.5
}

fn default_wall_dc() -> f64 {
    0.8
}

/// An axis-aligned box standing on its base. `center` is the center of the
/// bottom face; `width` runs along x, `length` along y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidSpec {
    pub center: [f64; 3],
    pub width: f64,
    pub length: f64,
    pub height: f64,
    /// Activated DC phase of roof samples.
    #[serde(default = "default_roof_dc")]
    pub roof_dc: f64,
    /// Activated DC phase of wall samples.
    #[serde(default = "default_wall_dc")]
    pub wall_dc: f64,
    #[serde(default = "default_ke_raw")]
    pub ke_raw: f64,
}

/// The faces of a cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Roof,
    Bottom,
    /// Normal −x, +x, −y, +y.
    WallNegX,
    WallPosX,
    WallNegY,
    WallPosY,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Roof,
        Face::Bottom,
        Face::WallNegX,
        Face::WallPosX,
        Face::WallNegY,
        Face::WallPosY,
    ];
    pub const VISIBLE: [Face; 5] = [Face::Roof, Face::WallNegX, Face::WallPosX, Face::WallNegY, Face::WallPosY];
}

/// A planar rectangle `origin + s·edge_a + t·edge_b`, `s, t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct FacePatch {
    pub origin: Vector3<f64>,
    pub edge_a: Vector3<f64>,
    pub edge_b: Vector3<f64>,
}

impl FacePatch {
    pub fn area(&self) -> f64 {
        self.edge_a.cross(&self.edge_b).norm()
    }

    pub fn at(&self, s: f64, t: f64) -> Vector3<f64> {
        self.origin + self.edge_a * s + self.edge_b * t
    }
}

impl CuboidSpec {
    pub fn new(center: [f64; 3], width: f64, length: f64, height: f64) -> Self {
        Self {
            center,
            width,
            length,
            height,
            roof_dc: default_roof_dc(),
            wall_dc: default_wall_dc(),
            ke_raw: DEFAULT_KE_RAW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = [self.width, self.length, self.height].iter().all(|d| d.is_finite() && *d > 0.0);
        if !dims_ok || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cuboid needs finite center and positive dimensions, got {}×{}×{} at {:?}",
                self.width, self.length, self.height, self.center
            )));
        }
        Ok(())
    }

    pub fn min_corner(&self) -> Vector3<f64> {
        Vector3::new(
            self.center[0] - self.width / 2.0,
            self.center[1] - self.length / 2.0,
            self.center[2],
        )
    }

    pub fn max_corner(&self) -> Vector3<f64> {
        Vector3::new(
            self.center[0] + self.width / 2.0,
            self.center[1] + self.length / 2.0,
            self.center[2] + self.height,
        )
    }

    /// Closed-box membership with a small tolerance.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        (0..3).all(|i| p[i] >= lo[i] - 1e-9 && p[i] <= hi[i] + 1e-9)
    }

    /// Distance from `p` to the boundary surface of the box.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        let outside = Vector3::from_fn(|i, _| (lo[i] - p[i]).max(p[i] - hi[i]).max(0.0));
        if outside.norm() > 0.0 {
            return outside.norm();
        }
        (0..3).map(|i| (p[i] - lo[i]).min(hi[i] - p[i])).fold(f64::INFINITY, f64::min)
    }

    pub fn face(&self, face: Face) -> FacePatch {
        let lo = self.min_corner();
        let hi = self.max_corner();
        let (w, l, h) = (self.width, self.length, self.height);
        let (ex, ey, ez) = (Vector3::x() * w, Vector3::y() * l, Vector3::z() * h);
        let (origin, edge_a, edge_b) = match face {
            Face::Roof => (Vector3::new(lo.x, lo.y, hi.z), ex, ey),
            Face::Bottom => (lo, ex, ey),
            Face::WallNegX => (lo, ey, ez),
            Face::WallPosX => (Vector3::new(hi.x, lo.y, lo.z), ey, ez),
            Face::WallNegY => (lo, ex, ez),
            Face::WallPosY => (Vector3::new(lo.x, hi.y, lo.z), ex, ez),
        };
        FacePatch { origin, edge_a, edge_b }
    }

    fn face_dc(&self, face: Face) -> f64 {
        match face {
            Face::Roof | Face::Bottom => self.roof_dc,
            _ => self.wall_dc,
        }
    }
}

fn spacing(density: f64) -> Result<f64> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::InvalidParameter(format!("density must be positive, got {density}")));
    }
    Ok(1.0 / density.sqrt())
}

fn grid_dims(patch: &FacePatch, step: f64) -> (usize, usize) {
    let na = (patch.edge_a.norm() / step).round().max(1.0) as usize;
    let nb = (patch.edge_b.norm() / step).round().max(1.0) as usize;
    (na, nb)
}

/// Cell centers of a face grid that are not buried in another part.
fn kept_cells(parts: &[CuboidSpec], owner: usize, patch: &FacePatch, step: f64) -> Vec<(usize, usize)> {
    let (na, nb) = grid_dims(patch, step);
    let mut out = Vec::with_capacity(na * nb);
    for a in 0..na {
        for b in 0..nb {
            let c = patch.at((a as f64 + 0.5) / na as f64, (b as f64 + 0.5) / nb as f64);
            let buried = parts.iter().enumerate().any(|(j, other)| j != owner && other.contains(&c));
            if !buried {
                out.push((a, b));
            }
        }
    }
    out
}

fn primitive(pos: Vector3<f64>, scale: f64, dc_value: f64, ke_raw: f64) -> GaussianPrimitive {
    GaussianPrimitive::isotropic(pos, scale, dc_value / Y00, ke_raw)
}

fn sample_parts(parts: &[CuboidSpec], density: f64, rng: &mut ChaCha8Rng) -> Result<Vec<GaussianPrimitive>> {
    let step = spacing(density)?;
    let mut out = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        part.validate()?;
        for face in Face::VISIBLE {
            let patch = part.face(face);
            let (na, nb) = grid_dims(&patch, step);
            for (a, b) in kept_cells(parts, i, &patch, step) {
                let s = (a as f64 + rng.gen::<f64>()) / na as f64;
                let t = (b as f64 + rng.gen::<f64>()) / nb as f64;
                out.push(primitive(patch.at(s, t), step, part.face_dc(face), part.ke_raw));
            }
        }
    }
    Ok(out)
}

/// Number of samples [`composite_target`] places on each part.
pub fn part_budget(parts: &[CuboidSpec], density: f64) -> Result<Vec<usize>> {
    let step = spacing(density)?;
    parts
        .iter()
        .enumerate()
        .map(|(i, part)| {
            part.validate()?;
            Ok(Face::VISIBLE
                .iter()
                .map(|&f| kept_cells(parts, i, &part.face(f), step).len())
                .sum())
        })
        .collect()
}

/// Ground samples on the square of half-size `ground_extent` around the
/// building, minus its footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    pub extent: f64,
    #[serde(default = "default_ground_dc")]
    pub dc: f64,
}

fn default_ground_dc() -> f64 {
    0.1
}

/// One cuboid building plus a low-return ground patch.
pub fn building_scene(spec: &CuboidSpec, ground_extent: f64, density: f64, seed: u64) -> Result<Scene> {
    building_scene_with_ground(spec, ground_extent, default_ground_dc(), density, seed)
}

pub fn building_scene_with_ground(
    spec: &CuboidSpec,
    ground_extent: f64,
    ground_dc: f64,
    density: f64,
    seed: u64,
) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = std::slice::from_ref(spec);
    let mut prims = sample_parts(parts, density, &mut rng)?;
    if ground_extent > 0.0 {
        let step = spacing(density)?;
        let cx = spec.center[0];
        let cy = spec.center[1];
        let n = (2.0 * ground_extent / step).round().max(1.0) as usize;
        let cell = 2.0 * ground_extent / n as f64;
        for a in 0..n {
            for b in 0..n {
                let x = cx - ground_extent + (a as f64 + rng.gen::<f64>()) * cell;
                let y = cy - ground_extent + (b as f64 + rng.gen::<f64>()) * cell;
                let pos = Vector3::new(x, y, spec.center[2]);
                let lo = spec.min_corner();
                let hi = spec.max_corner();
                let under = x >= lo.x && x <= hi.x && y >= lo.y && y <= hi.y;
                if !under {
                    prims.push(primitive(pos, step, ground_dc, spec.ke_raw));
                }
            }
        }
    }
    let mut scene = Scene::new(prims);
    scene.metadata.insert("generator".into(), "building".into());
    scene.metadata.insert("seed".into(), seed.to_string());
    Ok(scene)
}

/// Union of sampled cuboids, without ground.
pub fn composite_target(parts: &[CuboidSpec], density: f64, seed: u64) -> Result<Scene> {
    if parts.is_empty() {
        return Err(Error::Empty("composite target needs at least one cuboid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::new(sample_parts(parts, density, &mut rng)?);
    scene.metadata.insert("generator".into(), "composite".into());
    scene.metadata.insert("seed".into(), seed.to_string());
    Ok(scene)
}

/// Hull, turret and barrel of a small tracked vehicle, pointing along +y,
/// recentred so its ground footprint's bounding box is centred on the origin.
/// Mirror-symmetric under `x → −x`.
pub fn tank_preset() -> Vec<CuboidSpec> {
    let mut hull = CuboidSpec::new([0.0, 0.0, 0.0], 1.8, 3.2, 0.8);
    hull.roof_dc = 0.5;
    hull.wall_dc = 0.8;
    let mut turret = CuboidSpec::new([0.0, -0.2, 0.8], 1.2, 1.4, 0.5);
    turret.roof_dc = 0.6;
    turret.wall_dc = 0.9;
    let mut barrel = CuboidSpec::new([0.0, 1.35, 0.95], 0.2, 1.7, 0.2);
    barrel.roof_dc = 0.7;
    barrel.wall_dc = 0.7;
    let mut parts = vec![hull, turret, barrel];
    let (lo, hi) = parts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.min_corner().y), hi.max(p.max_corner().y))
    });
    let shift = (lo + hi) / 2.0;
    for p in &mut parts {
        p.center[1] -= shift;
    }
    parts
}

/// A whole scene description: cuboids, sampling density and an optional ground patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub seed: u64,
    /// Samples per square meter.
    pub density: f64,
    #[serde(default)]
    pub ground: Option<GroundSpec>,
    #[serde(rename = "cuboid", default)]
    pub cuboids: Vec<CuboidSpec>,
    /// Named preset appended to `cuboids`; only `"tank"` is known.
    #[serde(default)]
    pub preset: Option<String>,
}

impl SceneSpec {
    pub fn parts(&self) -> Result<Vec<CuboidSpec>> {
        let mut parts = self.cuboids.clone();
        match self.preset.as_deref() {
            None => {}
            Some("tank") => parts.extend(tank_preset()),
            Some(other) => return Err(Error::InvalidParameter(format!("unknown preset '{other}'"))),
        }
        if parts.is_empty() {
            return Err(Error::Empty("scene spec lists no cuboids".into()));
        }
        Ok(parts)
    }

    /// Builds the scene. A single cuboid with ground uses [`building_scene`].
    pub fn build(&self) -> Result<Scene> {
        let parts = self.parts()?;
        match (&self.ground, parts.as_slice()) {
            (Some(g), [one]) => building_scene_with_ground(one, g.extent, g.dc, self.density, self.seed),
            (Some(_), _) => Err(Error::InvalidParameter("ground is only supported for a single cuboid".into())),
            (None, _) => composite_target(&parts, self.density, self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_some_surface(parts: &[CuboidSpec], p: &Vector3<f64>) -> bool {
        parts.iter().any(|c| c.surface_distance(p) < 1e-9)
    }

    #[test]
    fn samples_lie_on_surfaces() {
        let parts = tank_preset();
        let scene = composite_target(&parts, 12.0, 5).unwrap();
        assert!(scene.primitives.iter().all(|p| on_some_surface(&parts, &p.position)));
        let spec = CuboidSpec::new([1.0, -2.0, 0.0], 4.0, 6.0, 10.0);
        let scene = building_scene(&spec, 0.0, 4.0, 1).unwrap();
        assert!(scene.primitives.iter().all(|p| spec.surface_distance(&p.position) < 1e-9));
    }

    #[test]
    fn no_sample_on_the_bottom_face() {
        let spec = CuboidSpec::new([0.0, 0.0, 0.0], 2.0, 2.0, 2.0);
        let scene = composite_target(&[spec], 16.0, 0).unwrap();
        // Wall samples can reach z = 0 only at the jitter limit.
        let bottom = scene.primitives.iter().filter(|p| p.position.z == 0.0 && p.position.x.abs() < 0.99);
        assert_eq!(bottom.filter(|p| p.position.y.abs() < 0.99).count(), 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let parts = tank_preset();
        let a = composite_target(&parts, 10.0, 3).unwrap();
        let b = composite_target(&parts, 10.0, 3).unwrap();
        let c = composite_target(&parts, 10.0, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_cuboid_composite_equals_building_without_ground() {
        let spec = CuboidSpec::new([0.0, 0.0, 0.0], 4.0, 4.0, 10.0);
        let mut a = building_scene(&spec, 0.0, 3.0, 9).unwrap();
        let mut b = composite_target(std::slice::from_ref(&spec), 3.0, 9).unwrap();
        a.metadata.clear();
        b.metadata.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn tank_count_matches_budgets() {
        let parts = tank_preset();
        let budget: usize = part_budget(&parts, 11.0).unwrap().iter().sum();
        assert_eq!(composite_target(&parts, 11.0, 0).unwrap().len(), budget);
    }

    #[test]
    fn tank_parts_are_mirror_symmetric() {
        for p in tank_preset() {
            assert_eq!(p.center[0], 0.0);
            assert!((p.min_corner().x + p.max_corner().x).abs() < 1e-12);
        }
        // The sampled cloud is symmetric up to jitter: every point has a
        // mirrored partner within one cell diagonal.
        let parts = tank_preset();
        let scene = composite_target(&parts, 16.0, 2).unwrap();
        let step = 0.25;
        for p in &scene.primitives {
            let m = Vector3::new(-p.position.x, p.position.y, p.position.z);
            let d = scene.primitives.iter().map(|q| (q.position - m).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 2.0 * step, "no mirror partner for {:?}", p.position);
        }
    }

    #[test]
    fn ground_skips_the_footprint() {
        let spec = CuboidSpec::new([0.0, 0.0, 0.0], 4.0, 4.0, 5.0);
        let with = building_scene(&spec, 8.0, 2.0, 0).unwrap();
        let without = building_scene(&spec, 0.0, 2.0, 0).unwrap();
        assert!(with.len() > without.len());
        let ground: Vec<_> = with.primitives[without.len()..].iter().collect();
        assert!(ground.iter().all(|p| p.position.z == 0.0 && (p.position.x.abs() > 2.0 || p.position.y.abs() > 2.0)));
        assert!(ground.iter().all(|p| (p.dc_phase() - 0.1).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_dimensions() {
        let spec = CuboidSpec::new([0.0, 0.0, 0.0], 0.0, 1.0, 1.0);
        assert!(composite_target(&[spec], 1.0, 0).is_err());
        assert!(composite_target(&[], 1.0, 0).is_err());
        assert!(building_scene(&CuboidSpec::new([0.0; 3], 1.0, 1.0, 1.0), 0.0, -1.0, 0).is_err());
    }
}

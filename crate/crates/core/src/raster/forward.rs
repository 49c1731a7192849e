use std::hash::{Hash, Hasher};

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::tiles::{covered_range, TileBins};
use super::RenderOptions;
use crate::error::{Error, Result};
use crate::geometry::{conic, project_all, ProjectedGaussian, ProjectedScene};
use crate::types::{RadarConfig, SarImage, Scene};

/// Per-cell lists over the computation grid, stored CSR-style in row-major
/// cell order. Entries index into the projected list and are depth-sorted,
/// ties broken by ascending primitive index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayLists {
    pub cols: usize,
    pub rows: usize,
    pub offsets: Vec<usize>,
    pub entries: Vec<usize>,
}

impl RayLists {
    pub fn n_rays(&self) -> usize {
        self.cols * self.rows
    }

    pub fn ray(&self, cell: usize) -> &[usize] {
        &self.entries[self.offsets[cell]..self.offsets[cell + 1]]
    }

    /// Center of a cell in computation-plane pixel coordinates.
    #[inline]
    pub fn center(&self, cell: usize) -> Vector2<f64> {
        Vector2::new((cell % self.cols) as f64, (cell / self.cols) as f64)
    }
}

#[inline]
pub(crate) fn mahalanobis(delta: &Vector2<f64>, conic: &Matrix2<f64>) -> f64 {
    conic.m11 * delta.x * delta.x + 2.0 * conic.m12 * delta.x * delta.y + conic.m22 * delta.y * delta.y
}

/// `exp(−Δᵀ·A·Δ)` for a precomputed inverse covariance `A`.
#[inline]
pub fn weight_from_conic(delta: &Vector2<f64>, conic: &Matrix2<f64>) -> f64 {
    (-mahalanobis(delta, conic)).exp()
}

/// Footprint weight `exp(−Δᵀ·Σ′⁻¹·Δ)`.
pub fn gaussian_weight(delta: &Vector2<f64>, cov2d: &Matrix2<f64>) -> Result<f64> {
    let det = cov2d.determinant();
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::DegenerateProjection { index: usize::MAX, det });
    }
    Ok(weight_from_conic(delta, &conic(cov2d)))
}

pub fn build_ray_lists(
    projected: &[ProjectedGaussian],
    config: &RadarConfig,
    opts: &RenderOptions,
) -> RayLists {
    let (cols, rows) = config.ray_grid;
    let bins = TileBins::build(projected, cols, rows, opts.tile_size, |g| (g.uv_comp, g.extent_comp));
    let per_tile: Vec<Vec<Vec<usize>>> = (0..bins.n_tiles())
        .into_par_iter()
        .map(|tile| {
            let (c0, c1, r0, r1) = bins.tile_bounds(tile);
            let tw = c1 - c0;
            let mut cells = vec![Vec::new(); tw * (r1 - r0)];
            for &k in bins.tile_keys(tile) {
                let g = &projected[k];
                let (Some((gc0, gc1)), Some((gr0, gr1))) = (
                    covered_range(g.uv_comp.x, g.extent_comp.x, cols),
                    covered_range(g.uv_comp.y, g.extent_comp.y, rows),
                ) else {
                    continue;
                };
                for r in gr0.max(r0)..=gr1.min(r1 - 1) {
                    for c in gc0.max(c0)..=gc1.min(c1 - 1) {
                        let delta = Vector2::new(c as f64, r as f64) - g.uv_comp;
                        if mahalanobis(&delta, &g.conic_comp) <= opts.cutoff {
                            cells[(r - r0) * tw + (c - c0)].push(k);
                        }
                    }
                }
            }
            cells
        })
        .collect();

    let mut offsets = Vec::with_capacity(cols * rows + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for r in 0..rows {
        for c in 0..cols {
            let tile = (r / bins.tile_size) * bins.tiles_x + c / bins.tile_size;
            let (c0, c1, r0, _) = bins.tile_bounds(tile);
            entries.extend_from_slice(&per_tile[tile][(r - r0) * (c1 - c0) + (c - c0)]);
            offsets.push(entries.len());
        }
    }
    RayLists { cols, rows, offsets, entries }
}

/// Per-primitive backscattered intensities plus the per-entry quantities the
/// backward pass needs, aligned with [`RayLists::entries`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntensityBuffer {
    /// Indexed like the projected list.
    pub intensities: Vec<f64>,
    /// Footprint weight of each entry at its ray center.
    pub weights: Vec<f64>,
    /// Transmittance reaching each entry.
    pub transmittance: Vec<f64>,
}

struct RayEntry {
    weight: f64,
    transmittance: f64,
    contribution: f64,
}

/// Emission–absorption accumulation along each ray: an entry with footprint
/// weight `w` and extinction `κ` absorbs `1 − exp(−κ·w)` of the transmittance
/// reaching it and returns that fraction scaled by its phase value.
pub fn compute_intensities(rays: &RayLists, projected: &[ProjectedGaussian]) -> Result<IntensityBuffer> {
    let per_ray: Vec<Vec<RayEntry>> = (0..rays.n_rays())
        .into_par_iter()
        .map(|cell| {
            let center = rays.center(cell);
            let mut t = 1.0;
            rays.ray(cell)
                .iter()
                .map(|&k| {
                    let g = &projected[k];
                    let weight = weight_from_conic(&(center - g.uv_comp), &g.conic_comp);
                    let optical = g.ke_sum * weight;
                    let contribution = t * -(-optical).exp_m1() * g.phase_value;
                    let entry = RayEntry {
                        weight,
                        transmittance: t,
                        contribution,
                    };
                    t *= (-optical).exp();
                    entry
                })
                .collect()
        })
        .collect();

    let n_entries = rays.entries.len();
    let mut buf = IntensityBuffer {
        intensities: vec![0.0; projected.len()],
        weights: Vec::with_capacity(n_entries),
        transmittance: Vec::with_capacity(n_entries),
    };
    for (e, entry) in rays.entries.iter().zip(per_ray.iter().flatten()) {
        buf.intensities[*e] += entry.contribution;
        buf.weights.push(entry.weight);
        buf.transmittance.push(entry.transmittance);
    }
    if let Some(k) = buf.intensities.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow {
            index: projected[k].index,
            what: format!("intensity {}", buf.intensities[k]),
        });
    }
    Ok(buf)
}

pub(crate) fn splat_bins(projected: &[ProjectedGaussian], config: &RadarConfig, opts: &RenderOptions) -> TileBins {
    TileBins::build(projected, config.n_azimuth, config.n_range, opts.tile_size, |g| {
        (g.uv_img, g.extent_img)
    })
}

/// Visits every `(pixel, slot in tile, projected index, Δ, weight)` inside the cutoff, tile by tile.
pub(crate) fn for_each_splat_in_tile(
    bins: &TileBins,
    tile: usize,
    projected: &[ProjectedGaussian],
    cutoff: f64,
    mut f: impl FnMut(usize, usize, usize, Vector2<f64>, f64),
) {
    let (c0, c1, r0, r1) = bins.tile_bounds(tile);
    for (slot, &k) in bins.tile_keys(tile).iter().enumerate() {
        let g = &projected[k];
        let (Some((gc0, gc1)), Some((gr0, gr1))) = (
            covered_range(g.uv_img.x, g.extent_img.x, bins.width),
            covered_range(g.uv_img.y, g.extent_img.y, bins.height),
        ) else {
            continue;
        };
        for r in gr0.max(r0)..=gr1.min(r1 - 1) {
            for c in gc0.max(c0)..=gc1.min(c1 - 1) {
                let delta = Vector2::new(c as f64, r as f64) - g.uv_img;
                let d = mahalanobis(&delta, &g.conic_img);
                if d <= cutoff {
                    f(r * bins.width + c, slot, k, delta, (-d).exp());
                }
            }
        }
    }
}

fn splat_with_bins(
    intensities: &IntensityBuffer,
    projected: &[ProjectedGaussian],
    bins: &TileBins,
    opts: &RenderOptions,
) -> SarImage {
    let per_tile: Vec<Vec<(usize, f64)>> = (0..bins.n_tiles())
        .into_par_iter()
        .map(|tile| {
            let mut local = Vec::new();
            for_each_splat_in_tile(bins, tile, projected, opts.cutoff, |pixel, _, k, _, beta| {
                local.push((pixel, beta * intensities.intensities[k]));
            });
            local
        })
        .collect();
    let mut img = SarImage::zeros(bins.height, bins.width);
    for (pixel, v) in per_tile.into_iter().flatten() {
        img.data[pixel] += v;
    }
    img
}

/// `S[n,m] = Σᵢ exp(−δᵢ)·Iᵢ` over primitives whose imaging footprint covers the pixel.
pub fn splat_image(
    intensities: &IntensityBuffer,
    projected: &[ProjectedGaussian],
    config: &RadarConfig,
    opts: &RenderOptions,
) -> SarImage {
    let bins = splat_bins(projected, config, opts);
    splat_with_bins(intensities, projected, &bins, opts)
}

/// Everything the backward pass reuses from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub config: RadarConfig,
    pub options: RenderOptions,
    pub projected: ProjectedScene,
    pub rays: RayLists,
    pub intensities: IntensityBuffer,
    pub splat_bins: TileBins,
    pub n_primitives: usize,
    fingerprint: u64,
}

impl ForwardState {
    pub(crate) fn check_matches(&self, scene: &Scene, config: &RadarConfig) -> Result<()> {
        if self.n_primitives != scene.len() || self.fingerprint != fingerprint(scene, config) {
            return Err(Error::State(
                "forward buffers were computed for a different scene or view".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn fingerprint(scene: &Scene, config: &RadarConfig) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in &scene.primitives {
        for v in p.to_params() {
            v.to_bits().hash(&mut h);
        }
    }
    for v in [
        config.azimuth_deg,
        config.elevation_deg,
        config.altitude_m,
        config.range_res_m,
        config.azimuth_res_m,
    ] {
        v.to_bits().hash(&mut h);
    }
    (config.n_range, config.n_azimuth, config.ray_grid).hash(&mut h);
    h.finish()
}

/// Full forward pass, retaining the buffers needed by [`super::backward`].
pub fn render_with_state(scene: &Scene, config: &RadarConfig, opts: &RenderOptions) -> Result<(SarImage, ForwardState)> {
    config.validate()?;
    scene.validate()?;
    let projected = project_all(scene, config, opts);
    let rays = build_ray_lists(&projected.gaussians, config, opts);
    let intensities = compute_intensities(&rays, &projected.gaussians)?;
    let bins = splat_bins(&projected.gaussians, config, opts);
    let image = splat_with_bins(&intensities, &projected.gaussians, &bins, opts);
    let state = ForwardState {
        config: config.clone(),
        options: opts.clone(),
        projected,
        rays,
        intensities,
        splat_bins: bins,
        n_primitives: scene.len(),
        fingerprint: fingerprint(scene, config),
    };
    Ok((image, state))
}

pub fn render(scene: &Scene, config: &RadarConfig, opts: &RenderOptions) -> Result<SarImage> {
    render_with_state(scene, config, opts).map(|(img, _)| img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GaussianPrimitive;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat(index: usize, uv: Vector2<f64>, depth: f64, ke_sum: f64, phase: f64) -> ProjectedGaussian {
        let cov = Matrix2::identity();
        ProjectedGaussian {
            index,
            uv_comp: uv,
            depth,
            uv_img: uv,
            aux: 0.0,
            cov2d_comp: cov,
            cov2d_img: cov,
            conic_comp: cov,
            conic_img: cov,
            phase_value: phase,
            phase_unclamped: phase,
            ke_sum,
            extent_comp: Vector2::repeat(3.0),
            extent_img: Vector2::repeat(3.0),
        }
    }

    fn single_ray_lists(n: usize) -> RayLists {
        RayLists {
            cols: 1,
            rows: 1,
            offsets: vec![0, n],
            entries: (0..n).collect(),
        }
    }

    #[test]
    fn weight_values() {
        let id = Matrix2::identity();
        assert_eq!(gaussian_weight(&Vector2::zeros(), &id).unwrap(), 1.0);
        assert_relative_eq!(gaussian_weight(&Vector2::new(1.0, 0.0), &id).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        let cov = Matrix2::new(2.0, 0.3, 0.3, 0.7);
        let dir = Vector2::new(0.6, -0.8);
        let w: Vec<f64> = (0..6).map(|k| gaussian_weight(&(dir * k as f64 * 0.5), &cov).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[1] < p[0]));
        assert!(gaussian_weight(&dir, &Matrix2::zeros()).is_err());
    }

    #[test]
    fn intensity_examples() {
        // One primitive at the ray center: δ = 1, κ = 1, P = 1.
        let p = vec![flat(0, Vector2::zeros(), 1.0, 1.0, 1.0)];
        let buf = compute_intensities(&single_ray_lists(1), &p).unwrap();
        assert_relative_eq!(buf.intensities[0], 1.0 - (-1f64).exp(), epsilon = 1e-15);

        let p = vec![flat(0, Vector2::zeros(), 1.0, 0.0, 1.0)];
        let buf = compute_intensities(&single_ray_lists(1), &p).unwrap();
        assert_eq!(buf.intensities[0], 0.0);

        let p = vec![
            flat(0, Vector2::zeros(), 1.0, 1.0, 1.0),
            flat(1, Vector2::zeros(), 2.0, 1.0, 1.0),
        ];
        let buf = compute_intensities(&single_ray_lists(2), &p).unwrap();
        let e = (-1f64).exp();
        assert_relative_eq!(buf.intensities[1], (1.0 - e) * e, epsilon = 1e-15);
        assert_relative_eq!(buf.intensities[1], 0.232544, epsilon = 1e-6);
        assert_relative_eq!(buf.transmittance[1], e, epsilon = 1e-15);
    }

    #[test]
    fn transmittance_non_increasing_and_energy_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<_> = (0..30)
            .map(|i| {
                flat(
                    i,
                    Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    i as f64,
                    rng.gen_range(0.0..3.0),
                    rng.gen_range(0.0..2.0),
                )
            })
            .collect();
        let buf = compute_intensities(&single_ray_lists(30), &p).unwrap();
        assert!(buf.transmittance.windows(2).all(|w| w[1] <= w[0]));
        let total: f64 = buf.intensities.iter().sum();
        let max_p = p.iter().map(|g| g.phase_value).fold(0.0, f64::max);
        assert!(total <= max_p + 1e-12);
    }

    #[test]
    fn ray_lists_sorted_with_index_tie_break() {
        let cfg = RadarConfig::new(0.0, 45.0, 10.0, 0.3, 4, 4);
        let c = Vector2::new(1.0, 1.0);
        let p = vec![
            flat(0, c, 2.0, 1.0, 1.0),
            flat(1, c, 1.0, 1.0, 1.0),
            flat(2, c, 1.0, 1.0, 1.0),
        ];
        let rays = build_ray_lists(&p, &cfg, &RenderOptions::default());
        assert_eq!(rays.ray(5), &[1, 2, 0]);
    }

    #[test]
    fn ray_lists_match_brute_force_overlap() {
        let cfg = RadarConfig::new(0.0, 45.0, 10.0, 0.3, 37, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: Vec<_> = (0..60)
            .map(|i| {
                let mut g = flat(
                    i,
                    Vector2::new(rng.gen_range(-3.0..24.0), rng.gen_range(-3.0..40.0)),
                    rng.gen_range(0.0..10.0),
                    1.0,
                    1.0,
                );
                let a: f64 = rng.gen_range(0.05..4.0);
                let b: f64 = rng.gen_range(0.05..4.0);
                let cov = Matrix2::new(a, 0.3 * (a * b).sqrt(), 0.3 * (a * b).sqrt(), b);
                g.cov2d_comp = cov;
                g.conic_comp = conic(&cov);
                g.extent_comp = Vector2::new((9.0 * a).sqrt(), (9.0 * b).sqrt());
                g
            })
            .collect();
        let rays = build_ray_lists(&p, &cfg, &RenderOptions::default());
        for cell in 0..rays.n_rays() {
            let center = rays.center(cell);
            let mut expect: Vec<usize> = (0..p.len())
                .filter(|&k| mahalanobis(&(center - p[k].uv_comp), &p[k].conic_comp) <= 9.0)
                .collect();
            expect.sort_by(|&a, &b| p[a].depth.total_cmp(&p[b].depth).then(a.cmp(&b)));
            assert_eq!(rays.ray(cell), expect.as_slice(), "cell {cell}");
        }
    }

    #[test]
    fn zero_footprint_at_corner_hits_only_exact_cells() {
        let cfg = RadarConfig::new(0.0, 45.0, 10.0, 0.3, 4, 4);
        let mut g = flat(0, Vector2::new(0.5, 0.5), 1.0, 1.0, 1.0);
        g.extent_comp = Vector2::zeros();
        let rays = build_ray_lists(&[g.clone()], &cfg, &RenderOptions::default());
        assert!(rays.entries.is_empty());
        g.uv_comp = Vector2::new(2.0, 1.0);
        let rays = build_ray_lists(&[g], &cfg, &RenderOptions::default());
        assert_eq!(rays.entries.len(), 1);
        assert_eq!(rays.ray(1 * 4 + 2), &[0]);
    }

    #[test]
    fn splat_examples() {
        let cfg = RadarConfig::new(0.0, 45.0, 10.0, 0.3, 4, 4);
        let opts = RenderOptions::default();
        let p = vec![flat(0, Vector2::new(1.0, 2.0), 1.0, 1.0, 1.0)];
        let buf = IntensityBuffer {
            intensities: vec![0.8],
            ..Default::default()
        };
        let img = splat_image(&buf, &p, &cfg, &opts);
        assert_relative_eq!(img.get(2, 1), 0.8, epsilon = 1e-15);
        assert_relative_eq!(img.get(2, 2), 0.8 * (-1f64).exp(), epsilon = 1e-15);

        let p2 = vec![p[0].clone(), flat(1, Vector2::new(1.0, 2.0), 3.0, 1.0, 1.0)];
        let buf2 = IntensityBuffer {
            intensities: vec![0.8, 0.5],
            ..Default::default()
        };
        let img2 = splat_image(&buf2, &p2, &cfg, &opts);
        assert_relative_eq!(img2.get(2, 1), 1.3, epsilon = 1e-15);
    }

    #[test]
    fn fully_culled_scene_renders_black() {
        let cfg = RadarConfig::new(0.0, 45.0, 100.0, 0.3, 8, 8);
        let scene = Scene::new(vec![GaussianPrimitive::isotropic(Vector3::new(0.0, 500.0, 0.0), 0.1, 1.0, 1.0)]);
        let img = render(&scene, &cfg, &RenderOptions::default()).unwrap();
        assert!(img.data.iter().all(|v| *v == 0.0));
    }
}

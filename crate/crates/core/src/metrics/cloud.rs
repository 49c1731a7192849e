use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::PointCloud;

type Cell = (i64, i64, i64);

/// Uniform-grid nearest-neighbor index. Queries search rings of cells
/// outwards until no unsearched cell can hold a closer point.
#[derive(Debug, Clone)]
pub struct NearestNeighbors<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    grid: HashMap<Cell, Vec<usize>>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl<'a> NearestNeighbors<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let (lo, hi) = points.iter().fold(
            (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let span = if points.is_empty() { Vector3::zeros() } else { hi - lo };
        // Roughly a few points per occupied cell for surface-like clouds.
        let area = (span.x * span.y + span.y * span.z + span.z * span.x).max(1e-12);
        let cell = (2.0 * area / points.len().max(1) as f64).sqrt().max(span.max() * 1e-6).max(1e-9);
        let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self {
            points,
            cell,
            grid,
            lo,
            hi,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> Cell {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Index and squared distance of the nearest point; `None` for an empty index.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let far = (q - self.lo).abs().sup(&(q - self.hi).abs()).norm();
        let max_ring = (far / self.cell).ceil() as i64 + 1;
        if max_ring > 64 {
            return self.nearest_brute(q);
        }
        let c = Self::key(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        for r in 0..=max_ring {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        let Some(ids) = self.grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) else {
                            continue;
                        };
                        for &i in ids {
                            let d = (self.points[i] - q).norm_squared();
                            if best.map_or(true, |(bi, bd)| d < bd || (d == bd && i < bi)) {
                                best = Some((i, d));
                            }
                        }
                    }
                }
            }
            // Every unsearched cell is at least r·cell away.
            if let Some((_, d)) = best {
                let reach = r as f64 * self.cell;
                if d < reach * reach {
                    break;
                }
            }
        }
        best
    }

    pub fn nearest_brute(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - q).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }
}

fn nn_sq_dists(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    let index = NearestNeighbors::new(to);
    from.par_iter()
        .map(|p| index.nearest(p).map(|(_, d)| d).unwrap_or(f64::INFINITY))
        .collect()
}

fn non_empty(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point cloud metrics need two non-empty clouds".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Squared nearest-neighbor distances averaged each way:
/// `(d(A→B), d(B→A), ½·(d(A→B) + d(B→A)))`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<(f64, f64, f64)> {
    non_empty(a, b)?;
    let ab = mean(&nn_sq_dists(&a.points, &b.points));
    let ba = mean(&nn_sq_dists(&b.points, &a.points));
    Ok((ab, ba, 0.5 * (ab + ba)))
}

/// Precision of the reconstruction `g` and recall of the reference `r`: a
/// point matches when its nearest neighbor on the other side lies within `tau`.
pub fn precision_recall_f1(g: &PointCloud, r: &PointCloud, tau: f64) -> Result<(f64, f64, f64)> {
    non_empty(g, r)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tau}")));
    }
    let t2 = tau * tau;
    let frac = |d: Vec<f64>| d.iter().filter(|&&v| v <= t2).count() as f64 / d.len() as f64;
    let p = frac(nn_sq_dists(&g.points, &r.points));
    let rc = frac(nn_sq_dists(&r.points, &g.points));
    let f1 = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
    Ok((p, rc, f1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudMetricsReport {
    /// Mean squared distance from each reference point to the reconstruction.
    pub dist_r_to_g: f64,
    pub dist_g_to_r: f64,
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tau: f64,
    pub n_reconstructed: usize,
    pub n_reference: usize,
}

/// All cloud metrics of reconstruction `g` against reference `r`.
pub fn cloud_metrics(g: &PointCloud, r: &PointCloud, tau: f64) -> Result<CloudMetricsReport> {
    let (g_to_r, r_to_g, cd) = chamfer(g, r)?;
    let (precision, recall, f1) = precision_recall_f1(g, r, tau)?;
    Ok(CloudMetricsReport {
        dist_r_to_g: r_to_g,
        dist_g_to_r: g_to_r,
        chamfer: cd,
        precision,
        recall,
        f1,
        tau,
        n_reconstructed: g.len(),
        n_reference: r.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-spread..spread)))
                .collect(),
        )
    }

    #[test]
    fn chamfer_hand_cases() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        assert_eq!(chamfer(&a, &a).unwrap().2, 0.0);
        let o = cloud(&[[0.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&o, &cloud(&[[1.0, 0.0, 0.0]])).unwrap().2, 1.0);
        let two = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&two, &o).unwrap(), (2.0, 0.0, 1.0));
        assert!(chamfer(&o, &PointCloud::default()).is_err());
    }

    #[test]
    fn prf_hand_cases() {
        let g = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        let r = cloud(&[[0.0, 0.0, 0.0]]);
        let (p, rc, f1) = precision_recall_f1(&g, &r, 0.5).unwrap();
        assert_eq!((p, rc), (0.5, 1.0));
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_recall_f1(&g, &g, 0.1).unwrap(), (1.0, 1.0, 1.0));
        let far = cloud(&[[5.0, 5.0, 5.0]]);
        assert_eq!(precision_recall_f1(&r, &far, 1e-9).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn grid_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, spread) in [(1, 1.0), (50, 0.1), (2000, 5.0)] {
            let pts = random_cloud(&mut rng, n, spread);
            let index = NearestNeighbors::new(&pts.points);
            for _ in 0..300 {
                let q = Vector3::from_fn(|_, _| rng.gen_range(-3.0 * spread..3.0 * spread));
                assert_eq!(index.nearest(&q), index.nearest_brute(&q));
            }
        }
        // Far-away queries take the brute-force path.
        let pts = random_cloud(&mut rng, 100, 1.0);
        let index = NearestNeighbors::new(&pts.points);
        let q = Vector3::new(1e4, 0.0, 0.0);
        assert_eq!(index.nearest(&q), index.nearest_brute(&q));
    }

    #[test]
    fn degenerate_clouds() {
        let same = cloud(&[[1.0, 1.0, 1.0]; 5]);
        let index = NearestNeighbors::new(&same.points);
        assert_eq!(index.nearest(&Vector3::new(1.0, 1.0, 1.0)), Some((0, 0.0)));
        assert_eq!(index.nearest(&Vector3::new(0.0, 1.0, 1.0)), Some((0, 1.0)));
    }

    proptest! {
        #[test]
        fn chamfer_is_symmetric(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, 30, 1.0);
            let b = random_cloud(&mut rng, 17, 2.0);
            let (ab, ba, cd) = chamfer(&a, &b).unwrap();
            let (ba2, ab2, cd2) = chamfer(&b, &a).unwrap();
            prop_assert_eq!((ab, ba), (ab2, ba2));
            prop_assert!((cd - cd2).abs() < 1e-15);
        }

        #[test]
        fn prf_monotone_in_tau(seed in 0u64..500, t1 in 0.01f64..2.0, dt in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_cloud(&mut rng, 40, 1.0);
            let r = random_cloud(&mut rng, 25, 1.0);
            let (p1, r1, f1) = precision_recall_f1(&g, &r, t1).unwrap();
            let (p2, r2, _) = precision_recall_f1(&g, &r, t1 + dt).unwrap();
            prop_assert!(p2 >= p1 && r2 >= r1);
            let hm = if p1 + r1 > 0.0 { 2.0 * p1 * r1 / (p1 + r1) } else { 0.0 };
            prop_assert!((f1 - hm).abs() < 1e-15);
        }
    }
}

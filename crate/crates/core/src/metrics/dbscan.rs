use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::types::PointCloud;

#[derive(Debug, Clone, PartialEq)]
pub struct DbscanOptions {
    /// Neighborhood radius, meters.
    pub eps: f64,
    /// Neighbors within `eps`, the point itself included, needed to be a core point.
    pub min_pts: usize,
    /// Keep only the most populous cluster.
    pub largest_only: bool,
}

impl DbscanOptions {
    pub fn new(eps: f64, min_pts: usize) -> Self {
        Self {
            eps,
            min_pts,
            largest_only: false,
        }
    }
}

struct Grid<'a> {
    points: &'a [Vector3<f64>],
    eps: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vector3<f64>], eps: f64) -> Self {
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &Vector3<f64>, eps: f64) -> (i64, i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64, (p.z / eps).floor() as i64)
    }

    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let c = Self::key(p, self.eps);
        let e2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        out.extend(ids.iter().copied().filter(|&j| (self.points[j] - p).norm_squared() <= e2));
                    }
                }
            }
        }
    }
}

/// Cluster label per point, `None` for noise. Labels are numbered in order of
/// the lowest-index core point of each cluster.
pub fn dbscan(points: &[Vector3<f64>], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
        return Err(Error::InvalidParameter(format!(
            "DBSCAN needs eps > 0 and min_pts ≥ 1, got eps = {eps}, min_pts = {min_pts}"
        )));
    }
    let grid = Grid::new(points, eps);
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut nbrs = Vec::new();
    let mut next = 0;
    for start in 0..points.len() {
        if visited[start] {
            continue;
        }
        grid.neighbors(start, &mut nbrs);
        if nbrs.len() < min_pts {
            continue;
        }
        let label = next;
        next += 1;
        visited[start] = true;
        labels[start] = Some(label);
        let mut queue: VecDeque<usize> = nbrs.iter().copied().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(label);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbors(j, &mut nbrs);
            if nbrs.len() >= min_pts {
                queue.extend(nbrs.iter().copied().filter(|&k| !visited[k]));
            }
        }
    }
    Ok(labels)
}

/// Indices of the points DBSCAN keeps: every clustered point or, with
/// `largest_only`, the most populous cluster (ties go to the lower label).
pub fn dbscan_keep(points: &[Vector3<f64>], opts: &DbscanOptions) -> Result<Vec<usize>> {
    let labels = dbscan(points, opts.eps, opts.min_pts)?;
    if !opts.largest_only {
        return Ok((0..labels.len()).filter(|&i| labels[i].is_some()).collect());
    }
    let n_labels = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    Ok(match (0..n_labels).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) {
        Some(best) => (0..labels.len()).filter(|&i| labels[i] == Some(best)).collect(),
        None => Vec::new(),
    })
}

/// Drops DBSCAN noise, see [`dbscan_keep`].
pub fn dbscan_filter(cloud: &PointCloud, opts: &DbscanOptions) -> Result<PointCloud> {
    Ok(cloud.select(&dbscan_keep(&cloud.points, opts)?))
}

use nalgebra::Vector2;

use crate::geometry::ProjectedGaussian;

/// Projected primitives binned into square tiles, depth-sorted within each tile.
///
/// Built from duplicated `(tile, depth, index)` keys and one global sort.
#[derive(Debug, Clone, Default)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
    /// `[start, end)` into `keys` per tile, row-major over tiles.
    pub ranges: Vec<(usize, usize)>,
    /// Indices into the projected list.
    pub keys: Vec<usize>,
}

/// Inclusive integer range of pixel centers covered by `[center − extent, center + extent]`,
/// clipped to `0..n`. `None` when empty.
pub(crate) fn covered_range(center: f64, extent: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (center - extent).ceil().max(0.0);
    let hi = (center + extent).floor().min(n as f64 - 1.0);
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return None;
    }
    Some((lo as usize, hi as usize))
}

impl TileBins {
    pub fn build(
        projected: &[ProjectedGaussian],
        width: usize,
        height: usize,
        tile_size: usize,
        select: impl Fn(&ProjectedGaussian) -> (Vector2<f64>, Vector2<f64>),
    ) -> Self {
        let tile_size = tile_size.max(1);
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let mut keyed: Vec<(usize, f64, usize)> = Vec::new();
        for (k, g) in projected.iter().enumerate() {
            let (center, extent) = select(g);
            let (Some((c0, c1)), Some((r0, r1))) = (
                covered_range(center.x, extent.x, width),
                covered_range(center.y, extent.y, height),
            ) else {
                continue;
            };
            for ty in r0 / tile_size..=r1 / tile_size {
                for tx in c0 / tile_size..=c1 / tile_size {
                    keyed.push((ty * tiles_x + tx, g.depth, k));
                }
            }
        }
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

        let n_tiles = tiles_x * tiles_y;
        let mut ranges = vec![(0, 0); n_tiles];
        let mut start = 0;
        while start < keyed.len() {
            let tile = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == tile {
                end += 1;
            }
            ranges[tile] = (start, end);
            start = end;
        }
        Self {
            tile_size,
            tiles_x,
            tiles_y,
            width,
            height,
            ranges,
            keys: keyed.into_iter().map(|k| k.2).collect(),
        }
    }

    pub fn n_tiles(&self) -> usize {
        self.ranges.len()
    }

    pub fn tile_keys(&self, tile: usize) -> &[usize] {
        let (s, e) = self.ranges[tile];
        &self.keys[s..e]
    }

    /// Pixel bounds `[c0, c1) × [r0, r1)` of a tile.
    pub fn tile_bounds(&self, tile: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let c0 = tx * self.tile_size;
        let r0 = ty * self.tile_size;
        (
            c0,
            (c0 + self.tile_size).min(self.width),
            r0,
            (r0 + self.tile_size).min(self.height),
        )
    }
}

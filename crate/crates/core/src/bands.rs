//! Range-profile segmentation of rendered building scenes into layover,
//! roof, ground and shadow bands.

use std::ops::Range;

use serde::Serialize;

use crate::types::SarImage;

/// Brightness class of a range cell, relative to the profile's peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Level {
    /// No return: radar shadow or an unsampled footprint.
    Dark,
    /// Single-surface return such as bare ground.
    Low,
    /// Two overlapping returns, e.g. roof alone over its footprint.
    Mid,
    Bright,
    /// Wall, roof and ground all folded into one cell.
    Peak,
}

/// Upper bounds of `Dark`, `Low`, `Mid` and `Bright` as fractions of the peak.
pub const LEVEL_BOUNDS: [f64; 4] = [0.02, 0.12, 0.4, 0.62];

impl Level {
    pub fn of(value: f64, peak: f64) -> Self {
        let r = if peak > 0.0 { value / peak } else { 0.0 };
        match LEVEL_BOUNDS.iter().position(|&b| r < b) {
            Some(0) => Level::Dark,
            Some(1) => Level::Low,
            Some(2) => Level::Mid,
            Some(_) => Level::Bright,
            None => Level::Peak,
        }
    }
}

/// Run of consecutive range cells, `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Band {
    pub start: usize,
    pub len: usize,
}

impl Band {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Reference levels are medians over cells `EDGE_REACH.start..EDGE_REACH.end`
/// away from an edge, clear of the blur around it.
const EDGE_REACH: std::ops::Range<usize> = 2..5;

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Sub-cell position of the half-step crossing near the boundary before
/// cell `at`, in cell units with cell `i` centered on `i + 0.5`.
fn edge(profile: &[f64], at: usize) -> f64 {
    let n = profile.len() as isize;
    let pick = |offsets: &mut dyn Iterator<Item = isize>| {
        median(offsets.filter(|&i| i >= 0 && i < n).map(|i| profile[i as usize]).collect())
    };
    let a = at as isize;
    let before = pick(&mut EDGE_REACH.map(|d| a - 1 - d as isize));
    let after = pick(&mut EDGE_REACH.map(|d| a + d as isize));
    let (Some(before), Some(after)) = (before, after) else {
        return at as f64;
    };
    let half = 0.5 * (before + after);
    let lo = (at.saturating_sub(EDGE_REACH.end)).max(0);
    let hi = (at + EDGE_REACH.end).min(profile.len() - 1);
    // Crossing nearest to the nominal boundary.
    (lo..hi)
        .filter_map(|i| {
            let (a, b) = (profile[i] - half, profile[i + 1] - half);
            (a * b <= 0.0 && a != b).then(|| i as f64 + 0.5 + a / (a - b))
        })
        .min_by(|x, y| (x - at as f64).abs().total_cmp(&(y - at as f64).abs()))
        .unwrap_or(at as f64)
}

/// Band extent in cells, measured between half-step crossings.
pub fn extent(profile: &[f64], band: Band) -> f64 {
    let end = if band.end() < profile.len() { edge(profile, band.end()) } else { band.end() as f64 };
    let start = if band.start > 0 { edge(profile, band.start) } else { 0.0 };
    (end - start).max(0.0)
}

/// Mean over `cols` of every image row.
pub fn range_profile(img: &SarImage, cols: Range<usize>) -> Vec<f64> {
    let n = cols.len().max(1) as f64;
    (0..img.height)
        .map(|r| cols.clone().map(|c| img.get(r, c)).sum::<f64>() / n)
        .collect()
}

pub fn levels(profile: &[f64]) -> Vec<Level> {
    let peak = profile.iter().cloned().fold(0.0, f64::max);
    profile.iter().map(|&v| Level::of(v, peak)).collect()
}

/// Maximal runs of cells whose level satisfies `keep`, longest first.
pub fn runs(levels: &[Level], keep: impl Fn(Level) -> bool) -> Vec<Band> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in levels.iter().chain(std::iter::once(&Level::Dark)).enumerate() {
        let inside = i < levels.len() && keep(l);
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(Band { start: s, len: i - s });
                start = None;
            }
            _ => {}
        }
    }
    out.sort_by(|a, b| b.len.cmp(&a.len).then(a.start.cmp(&b.start)));
    out
}

/// Summary of a building profile, lengths in range cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingBands {
    /// Longest run at `Bright` or above: the layover band.
    pub bright: Band,
    /// Longest `Peak` run inside the bright band: the part the roof folds onto.
    pub roof_in_layover: Option<Band>,
    /// `Mid` cells between the bright band and the shadow: roof seen on its own.
    pub roof_after_layover: Option<Band>,
    /// Dark run after the bright band, footprint and shadow together.
    pub shadow: Option<Band>,
    /// Number of separate bright runs longer than one cell.
    pub bright_runs: usize,
}

/// Segments a profile whose near range comes first.
pub fn building_bands(profile: &[f64]) -> Option<BuildingBands> {
    let lv = levels(profile);
    let bright_all = runs(&lv, |l| l >= Level::Bright);
    let bright = *bright_all.first()?;
    let inside = &lv[bright.start..bright.end()];
    let roof_in_layover = runs(inside, |l| l == Level::Peak).first().map(|b| Band {
        start: b.start + bright.start,
        len: b.len,
    });
    let mut i = bright.end();
    let mid_start = i;
    while i < lv.len() && lv[i] == Level::Mid {
        i += 1;
    }
    let roof_after_layover = (i > mid_start).then_some(Band {
        start: mid_start,
        len: i - mid_start,
    });
    // Skip the one- or two-cell fall-off into the shadow.
    let mut j = i;
    while j < lv.len() && j < i + 3 && lv[j] != Level::Dark {
        j += 1;
    }
    let shadow = runs(&lv[j..], |l| l == Level::Dark)
        .into_iter()
        .min_by_key(|b| b.start)
        .filter(|b| b.start == 0)
        .map(|b| Band { start: b.start + j, len: b.len });
    Some(BuildingBands {
        bright,
        roof_in_layover,
        roof_after_layover,
        shadow,
        bright_runs: bright_all.iter().filter(|b| b.len > 1).count(),
    })
}

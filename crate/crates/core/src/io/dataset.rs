//! JSONL view manifests: one record per line, image paths relative to the manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image_io::{load_image, save_image, Normalization};
use crate::error::{Error, Result};
use crate::types::{RadarConfig, Split, ViewDataset};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub image: PathBuf,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub altitude_m: f64,
    pub range_res_m: f64,
    pub azimuth_res_m: f64,
    /// Cross-checked against the decoded image when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_azimuth: Option<usize>,
    /// Computation-plane grid as `[cols, rows]`; one ray per pixel when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ray_grid: Option<(usize, usize)>,
    pub split: Split,
}

impl ViewRecord {
    fn config(&self, height: usize, width: usize) -> RadarConfig {
        RadarConfig {
            azimuth_deg: self.azimuth_deg,
            elevation_deg: self.elevation_deg,
            altitude_m: self.altitude_m,
            range_res_m: self.range_res_m,
            azimuth_res_m: self.azimuth_res_m,
            n_range: height,
            n_azimuth: width,
            ray_grid: self.ray_grid.unwrap_or((width, height)),
        }
    }
}

/// Loads every view listed in a manifest. Blank lines and `#` comments are skipped;
/// errors carry the zero-based record index.
pub fn load_dataset(manifest: &Path) -> Result<ViewDataset> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut dataset = ViewDataset::default();
    let lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    for (index, line) in lines.enumerate() {
        let rec_err = |message: String| Error::Record { index, message };
        let rec: ViewRecord = serde_json::from_str(line).map_err(|e| rec_err(format!("malformed record: {e}")))?;
        if !(rec.range_res_m > 0.0 && rec.azimuth_res_m > 0.0) {
            return Err(rec_err("resolutions must be positive".into()));
        }
        let path = base.join(&rec.image);
        if !path.is_file() {
            return Err(rec_err(format!("image {} does not exist", path.display())));
        }
        let image = load_image(&path).map_err(|e| rec_err(e.to_string()))?;
        let (h, w) = image.shape();
        let claimed = (rec.n_range.unwrap_or(h), rec.n_azimuth.unwrap_or(w));
        if claimed != (h, w) {
            return Err(rec_err(format!(
                "image {} is {h}×{w} but the record claims {}×{}",
                rec.image.display(),
                claimed.0,
                claimed.1
            )));
        }
        let config = rec.config(h, w);
        config.validate().map_err(|e| rec_err(e.to_string()))?;
        dataset.push(config, image, rec.split).map_err(|e| rec_err(e.to_string()))?;
    }
    if dataset.is_empty() {
        return Err(Error::Empty(format!("manifest {} lists no views", manifest.display())));
    }
    Ok(dataset)
}

/// Writes `view_NNN.png` images and a manifest into `dir`; returns the manifest path.
pub fn save_dataset(dataset: &ViewDataset, dir: &Path, normalization: Normalization) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(dataset.len());
    for (i, view) in dataset.views.iter().enumerate() {
        let name = PathBuf::from(format!("view_{i:03}.png"));
        save_image(&view.image, &dir.join(&name), normalization)?;
        let c = &view.config;
        records.push(ViewRecord {
            image: name,
            azimuth_deg: c.azimuth_deg,
            elevation_deg: c.elevation_deg,
            altitude_m: c.altitude_m,
            range_res_m: c.range_res_m,
            azimuth_res_m: c.azimuth_res_m,
            n_range: Some(c.n_range),
            n_azimuth: Some(c.n_azimuth),
            ray_grid: (c.ray_grid != (c.n_azimuth, c.n_range)).then_some(c.ray_grid),
            split: view.split,
        });
    }
    let manifest = dir.join(MANIFEST_NAME);
    write_jsonl(&manifest, &records)?;
    Ok(manifest)
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Parse(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Parses `az=…,el=…,alt=…,dr=…,da=…,nr=…,na=…` into a view. `res=` sets both
/// resolutions; `grid=COLSxROWS` overrides the ray grid.
pub fn parse_view_spec(spec: &str) -> Result<RadarConfig> {
    let mut cfg = RadarConfig::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0, 0);
    let mut grid = None;
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("view field '{part}' is not key=value")))?;
        let num = || v.parse::<f64>().map_err(|_| Error::Parse(format!("view field '{k}': bad number '{v}'")));
        let count = || v.parse::<usize>().map_err(|_| Error::Parse(format!("view field '{k}': bad count '{v}'")));
        match k {
            "az" => cfg.azimuth_deg = num()?,
            "el" => cfg.elevation_deg = num()?,
            "alt" => cfg.altitude_m = num()?,
            "dr" => cfg.range_res_m = num()?,
            "da" => cfg.azimuth_res_m = num()?,
            "res" => {
                cfg.range_res_m = num()?;
                cfg.azimuth_res_m = cfg.range_res_m;
            }
            "nr" => cfg.n_range = count()?,
            "na" => cfg.n_azimuth = count()?,
            "grid" => {
                let (c, r) = v
                    .split_once('x')
                    .and_then(|(c, r)| Some((c.parse().ok()?, r.parse().ok()?)))
                    .ok_or_else(|| Error::Parse(format!("grid must be COLSxROWS, got '{v}'")))?;
                grid = Some((c, r));
            }
            other => return Err(Error::Parse(format!("unknown view field '{other}'"))),
        }
    }
    let missing: Vec<&str> = [
        ("az", cfg.azimuth_deg.is_nan()),
        ("el", cfg.elevation_deg.is_nan()),
        ("alt", cfg.altitude_m.is_nan()),
        ("dr", cfg.range_res_m.is_nan()),
        ("da", cfg.azimuth_res_m.is_nan()),
        ("nr", cfg.n_range == 0),
        ("na", cfg.n_azimuth == 0),
    ]
    .iter()
    .filter_map(|&(k, m)| m.then_some(k))
    .collect();
    if !missing.is_empty() {
        return Err(Error::Parse(format!("view spec is missing {}", missing.join(", "))));
    }
    cfg.ray_grid = grid.unwrap_or((cfg.n_azimuth, cfg.n_range));
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SarImage;

    fn sweep(n: usize) -> ViewDataset {
        let mut ds = ViewDataset::default();
        for i in 0..n {
            let cfg = RadarConfig::new(15.0 * i as f64, 45.0, 10000.0, 0.3, 6, 4);
            let img = SarImage::from_vec(6, 4, (0..24).map(|k| (k + i) as f64 / 50.0).collect()).unwrap();
            ds.push(cfg, img, if i % 2 == 0 { Split::Train } else { Split::Test }).unwrap();
        }
        ds
    }

    #[test]
    fn save_and_load_24_views() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = sweep(24);
        ds.views[5].config.ray_grid = (9, 17);
        let manifest = save_dataset(&ds, dir.path(), Normalization::FixedMax { max_value: 1.0 }).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back.len(), 24);
        for (a, b) in ds.views.iter().zip(&back.views) {
            assert_eq!(a.config, b.config);
            assert_eq!(a.split, b.split);
            let err = a.image.data.iter().zip(&b.image.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        std::fs::write(&path, "\n# nothing\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Empty(_))));
    }

    #[test]
    fn dimension_mismatch_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&sweep(3), dir.path(), Normalization::PerImageMax).unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        let edited = text.replacen("\"n_range\":6", "\"n_range\":64", 3);
        let lines: Vec<&str> = text.lines().collect();
        let mixed = format!("{}\n{}\n", lines[0], edited.lines().nth(1).unwrap());
        std::fs::write(&manifest, mixed).unwrap();
        match load_dataset(&manifest) {
            Err(Error::Record { index: 1, message }) => assert!(message.contains("6×4"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_and_malformed_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        std::fs::write(
            &path,
            r#"{"image":"gone.png","azimuth_deg":0,"elevation_deg":45,"altitude_m":1,"range_res_m":0.3,"azimuth_res_m":0.3,"split":"train"}"#,
        )
        .unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Record { index: 0, .. })));
        std::fs::write(&path, "{\"image\": 3}\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Record { index: 0, .. })));
    }

    #[test]
    fn view_spec_parsing() {
        let cfg = parse_view_spec("az=30,el=45,alt=10000,dr=0.3,da=0.25,nr=64,na=32").unwrap();
        assert_eq!((cfg.azimuth_deg, cfg.azimuth_res_m, cfg.n_range, cfg.ray_grid), (30.0, 0.25, 64, (32, 64)));
        let cfg = parse_view_spec("az=0,el=30,alt=5,res=0.5,nr=8,na=8,grid=4x2").unwrap();
        assert_eq!(cfg.ray_grid, (4, 2));
        assert!(parse_view_spec("az=0,el=95,alt=5,res=0.5,nr=8,na=8").is_err());
        let err = parse_view_spec("az=0,el=45,res=0.3").unwrap_err().to_string();
        assert!(err.contains("alt, nr, na"), "{err}");
        assert!(parse_view_spec("az=x,el=45,alt=5,res=0.5,nr=8,na=8").is_err());
    }
}

//! Command-line front end. The `sarsplat` binary only forwards to [`main`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::{self, Normalization};
use crate::metrics::{cloud_metrics, dbscan_keep, image_metrics, sample_target_points, DbscanOptions};
use crate::optim::{init_hemisphere, train, TrainConfig};
use crate::pipeline::{reconstruction_cloud, MIN_BACKSCATTER};
use crate::raster::{render, RenderOptions};
use crate::scene_gen::SceneSpec;
use crate::simulate::{simulate, Sweep};
use crate::types::{PointCloud, Scene, Split};

#[derive(Debug, Parser)]
#[command(name = "sarsplat", version, about = "Gaussian-splatting SAR rendering and reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one view of a scene.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// `az=…,el=…,alt=…,dr=…,da=…,nr=…,na=…` (`res=` sets both resolutions, `grid=CxR` the ray grid).
        #[arg(long)]
        view: String,
        #[arg(long)]
        out: PathBuf,
        /// Store with this fixed maximum instead of the image's own maximum.
        #[arg(long)]
        max: Option<f64>,
    },
    /// Render a scene spec over an azimuth/elevation sweep into a dataset directory.
    Simulate {
        /// TOML scene spec.
        #[arg(long)]
        scene_spec: PathBuf,
        /// `AZIMUTHS/ELEVATIONS`, each a comma list or `start:stop:step` (inclusive).
        #[arg(long, default_value = "0:345:15/15,45,75")]
        sweep: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        n_range: usize,
        #[arg(long, default_value_t = 32)]
        n_azimuth: usize,
        /// Range and azimuth resolution, meters.
        #[arg(long, default_value_t = 0.3)]
        res: f64,
        #[arg(long, default_value_t = 10_000.0)]
        altitude: f64,
        /// Azimuths that are multiples of this go to the training split.
        #[arg(long, default_value_t = 45.0)]
        train_step: f64,
        /// Computation-plane ray cell, meters; one ray per pixel when omitted.
        #[arg(long)]
        ray_cell: Option<f64>,
        /// Surface samples written to `reference.ply`.
        #[arg(long, default_value_t = 5000)]
        reference_points: usize,
    },
    /// Fit a scene to the training views of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// `hemisphere:n=…,r=…` or a scene PLY.
        #[arg(long)]
        init: String,
        /// TOML training config; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed and seeds the hemisphere.
        #[arg(long)]
        seed: Option<u64>,
        /// Training log, one JSON record per line.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// PSNR and SSIM of a scene against every view of a manifest.
    EvalImages {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Chamfer distance and F1 of a reconstruction against reference points.
    EvalPointcloud {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        tau: f64,
        #[arg(long)]
        report: PathBuf,
        /// Scene inputs drop primitives whose backscatter is below this.
        #[arg(long, default_value_t = MIN_BACKSCATTER)]
        min_backscatter: f64,
    },
    /// DBSCAN outlier removal; scene inputs keep their full primitives.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        #[arg(long, default_value_t = 5)]
        min_pts: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        largest_only: bool,
        #[arg(long, default_value_t = MIN_BACKSCATTER)]
        min_backscatter: f64,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 10)]
        max_primitives: usize,
    },
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 1 for invalid input, 2 for numerical failure.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Render { scene, view, out, max } => {
            let scene = io::load_scene(&scene)?;
            let config = io::parse_view_spec(&view)?;
            let img = render(&scene, &config, &RenderOptions::default())?;
            let norm = max.map_or(Normalization::PerImageMax, |m| Normalization::FixedMax { max_value: m });
            io::save_image(&img, &out, norm)?;
            println!("wrote {} ({}×{}, max {:.6})", out.display(), img.height, img.width, img.max());
            Ok(())
        }
        Command::Simulate {
            scene_spec,
            sweep,
            out_dir,
            n_range,
            n_azimuth,
            res,
            altitude,
            train_step,
            ray_cell,
            reference_points,
        } => {
            let spec: SceneSpec = io::load_toml(&scene_spec)?;
            let scene = spec.build()?;
            let (azimuths_deg, elevations_deg) = parse_sweep(&sweep)?;
            let sweep = Sweep {
                azimuths_deg,
                elevations_deg,
                altitude_m: altitude,
                range_res_m: res,
                azimuth_res_m: res,
                n_range,
                n_azimuth,
                train_azimuth_step_deg: train_step,
                ray_cell_m: ray_cell,
            };
            let (dataset, max) = simulate(&scene, &sweep.views()?, &RenderOptions::default())?;
            let manifest = io::save_dataset(&dataset, &out_dir, Normalization::FixedMax { max_value: 1.0 })?;
            io::save_scene(&scene, &out_dir.join("target.ply"))?;
            let reference = sample_target_points(&spec.parts()?, reference_points, spec.seed, false)?;
            io::save_points(&reference, &out_dir.join("reference.ply"))?;
            println!(
                "wrote {} views ({} train) to {}, intensity scale {max:.6}",
                dataset.len(),
                dataset.split(Split::Train).count(),
                manifest.display()
            );
            Ok(())
        }
        Command::Train {
            manifest,
            init,
            config,
            out,
            seed,
            log,
        } => {
            let dataset = io::load_dataset(&manifest)?;
            let mut cfg = match &config {
                Some(p) => io::load_toml::<TrainConfig>(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let init = parse_init(&init, cfg.seed)?;
            let result = train(&dataset, &init, &cfg)?;
            io::save_scene(&result.scene, &out)?;
            if let Some(p) = log {
                io::write_jsonl(&p, &result.log)?;
            }
            let last = result.log.last();
            println!(
                "trained {} iterations: {} primitives, final loss {}, wrote {}",
                cfg.iterations,
                result.scene.len(),
                last.map_or("n/a".to_string(), |r| format!("{:.6}", r.loss)),
                out.display()
            );
            Ok(())
        }
        Command::EvalImages { manifest, scene, report } => {
            let dataset = io::load_dataset(&manifest)?;
            let scene = io::load_scene(&scene)?;
            let pairs = dataset
                .views
                .iter()
                .map(|v| Ok((render(&scene, &v.config, &RenderOptions::default())?, v.image.clone(), v.split)))
                .collect::<Result<Vec<_>>>()?;
            let r = image_metrics(&pairs, 1.0)?;
            io::write_jsonl(&report, &r.views)?;
            for split in [Split::Train, Split::Test] {
                if let Some((p, s)) = r.split_mean(split) {
                    println!("{}: psnr {p:.3} dB, ssim {s:.4}", split_name(split));
                }
            }
            println!("all: psnr {:.3} dB, ssim {:.4}", r.mean_psnr, r.mean_ssim);
            Ok(())
        }
        Command::EvalPointcloud {
            rec,
            reference,
            tau,
            report,
            min_backscatter,
        } => {
            let g = load_cloud(&rec, min_backscatter)?;
            let r = io::load_point_cloud(&reference)?;
            let m = cloud_metrics(&g, &r, tau)?;
            io::write_jsonl(&report, std::slice::from_ref(&m))?;
            println!(
                "chamfer {:.6} (R→G {:.6}, G→R {:.6}), precision {:.4}, recall {:.4}, f1 {:.4} at τ = {tau}",
                m.chamfer, m.dist_r_to_g, m.dist_g_to_r, m.precision, m.recall, m.f1
            );
            Ok(())
        }
        Command::Filter {
            input,
            eps,
            min_pts,
            out,
            largest_only,
            min_backscatter,
        } => {
            let opts = DbscanOptions {
                eps,
                min_pts,
                largest_only,
            };
            match try_load_scene(&input)? {
                Some(scene) => {
                    let strong: Vec<usize> = (0..scene.len())
                        .filter(|&i| scene.primitives[i].backscatter() >= min_backscatter)
                        .collect();
                    let centers: Vec<_> = strong.iter().map(|&i| scene.primitives[i].position).collect();
                    let keep = dbscan_keep(&centers, &opts)?;
                    let kept = Scene {
                        primitives: keep.iter().map(|&k| scene.primitives[strong[k]].clone()).collect(),
                        metadata: scene.metadata.clone(),
                    };
                    io::save_scene(&kept, &out)?;
                    println!("kept {} of {} primitives", kept.len(), scene.len());
                }
                None => {
                    let cloud = io::load_point_cloud(&input)?;
                    let keep = dbscan_keep(&cloud.points, &opts)?;
                    let kept = cloud.select(&keep);
                    io::save_points(&kept, &out)?;
                    println!("kept {} of {} points", kept.len(), cloud.len());
                }
            }
            Ok(())
        }
        Command::Gradcheck {
            seed,
            size,
            scenes,
            max_primitives,
        } => {
            let report = crate::gradcheck::run(seed, size, scenes, max_primitives)?;
            for g in &report.groups {
                println!(
                    "{:<11} checked {:>5}  failed {:>3}  max rel err {:.3e}  max abs err {:.3e}",
                    g.group, g.checked, g.failed, g.max_rel_err, g.max_abs_err
                );
            }
            if report.passed() {
                println!("gradcheck passed ({} components)", report.checked());
                Ok(())
            } else {
                let failed: usize = report.groups.iter().map(|g| g.failed).sum();
                Err(Error::NumericalOverflow {
                    index: failed,
                    what: "gradient components disagree with finite differences".into(),
                })
            }
        }
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

/// `Some(scene)` for full scene files, `None` for plain point files.
fn try_load_scene(path: &Path) -> Result<Option<Scene>> {
    match io::load_scene(path) {
        Ok(s) => Ok(Some(s)),
        Err(Error::MissingProperties(_)) | Err(Error::Ply(_)) if path.is_file() => Ok(None),
        Err(e) => Err(e),
    }
}

fn load_cloud(path: &Path, min_backscatter: f64) -> Result<PointCloud> {
    match try_load_scene(path)? {
        Some(scene) => Ok(reconstruction_cloud(&scene, min_backscatter)),
        None => io::load_point_cloud(path),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad angle list '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, c] => {
            let (start, stop, step): (f64, f64, f64) =
                (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?);
            if !(step > 0.0) || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..n).map(|k| start + step * k as f64).collect())
        }
        [_] => s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}

/// `AZIMUTHS/ELEVATIONS`.
pub fn parse_sweep(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (az, el) = s
        .split_once('/')
        .ok_or_else(|| Error::Parse(format!("sweep must be AZIMUTHS/ELEVATIONS, got '{s}'")))?;
    Ok((parse_list(az)?, parse_list(el)?))
}

/// `hemisphere:n=…,r=…` or a path to a scene PLY.
pub fn parse_init(s: &str, seed: u64) -> Result<Scene> {
    let Some(rest) = s.strip_prefix("hemisphere:") else {
        return io::load_scene(Path::new(s));
    };
    let (mut n, mut r) = (None, None);
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            Some(("r", v)) => r = v.parse::<f64>().ok(),
            _ => return Err(Error::Parse(format!("unknown hemisphere field '{part}'"))),
        }
    }
    match (n, r) {
        (Some(n), Some(r)) => init_hemisphere(n, r, seed),
        _ => Err(Error::Parse(format!("hemisphere init needs n=COUNT,r=METERS, got '{s}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let (az, el) = parse_sweep("0:345:15/15,45,75").unwrap();
        assert_eq!((az.len(), az[23], el), (24, 345.0, vec![15.0, 45.0, 75.0]));
        assert_eq!(parse_sweep("10/20").unwrap(), (vec![10.0], vec![20.0]));
        assert!(parse_sweep("0:10:0/45").is_err());
        assert!(parse_sweep("0,15").is_err());
    }

    #[test]
    fn init_parsing() {
        assert_eq!(parse_init("hemisphere:n=12,r=2", 1).unwrap().len(), 12);
        assert!(parse_init("hemisphere:n=12", 1).is_err());
        assert!(parse_init("hemisphere:n=12,r=2,q=1", 1).is_err());
        assert!(matches!(parse_init("/no/such/file.ply", 1), Err(Error::Io { .. })));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main(["sarsplat", "--help"]), 0);
        assert_eq!(main(["sarsplat", "bogus"]), 1);
        assert_eq!(
            main(["sarsplat", "render", "--scene", "/no/such.ply", "--view", "az=0", "--out", "/tmp/x.png"]),
            1
        );
    }
}

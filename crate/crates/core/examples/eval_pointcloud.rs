//! Chamfer distance and F1 of a reconstruction against reference samples.
//!
//! With two PLY paths it scores the first against the second. Without
//! arguments it scores jittered copies of the tank reference, to show how
//! the metrics respond to surface noise.
//!
//! `cargo run --release --example eval_pointcloud -- [rec.ply ref.ply] [tau]`

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sarsplat::io::load_point_cloud;
use sarsplat::metrics::{cloud_metrics, sample_target_points};
use sarsplat::scene_gen::tank_preset;
use sarsplat::PointCloud;

fn main() -> sarsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() >= 2 {
        let tau = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.6);
        let rec = load_point_cloud(Path::new(&args[0]))?;
        let reference = load_point_cloud(Path::new(&args[1]))?;
        let m = cloud_metrics(&rec, &reference, tau)?;
        println!("{}", serde_json::to_string_pretty(&m).unwrap_or_default());
        return Ok(());
    }

    let reference = sample_target_points(&tank_preset(), 5000, 7, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("sigma   chamfer   precision  recall   f1 (tau = 0.6 m)");
    for sigma in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
        let noise = Normal::new(0.0, sigma).expect("valid sigma");
        let jittered = PointCloud::new(
            reference
                .points
                .iter()
                .step_by(3)
                .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
                .collect(),
        );
        let m = cloud_metrics(&jittered, &reference, 0.6)?;
        println!("{sigma:<7.2} {:<9.4} {:<10.3} {:<8.3} {:.3}", m.chamfer, m.precision, m.recall, m.f1);
    }
    Ok(())
}

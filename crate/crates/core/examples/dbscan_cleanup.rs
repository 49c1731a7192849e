//! Removes floating outliers from a point cloud with DBSCAN.
//!
//! With a PLY path it filters that cloud. Without one it plants uniform
//! outliers around the tank reference samples and reports what survives.
//!
//! `cargo run --release --example dbscan_cleanup -- [in.ply] [eps] [min_pts] [out.ply]`

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarsplat::io::{load_point_cloud, save_points};
use sarsplat::metrics::{dbscan, dbscan_keep, sample_target_points, DbscanOptions};
use sarsplat::scene_gen::tank_preset;
use sarsplat::PointCloud;

fn main() -> sarsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let eps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let min_pts = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let opts = DbscanOptions::new(eps, min_pts);

    let (cloud, planted) = match args.first() {
        Some(path) => (load_point_cloud(Path::new(path))?, 0),
        None => {
            let target = sample_target_points(&tank_preset(), 2000, 8, false)?;
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut points = target.points.clone();
            while points.len() < target.len() + 100 {
                let q = Vector3::from_fn(|_, _| rng.gen_range(-8.0..8.0));
                if target.points.iter().all(|p| (p - q).norm() > 1.5) {
                    points.push(q);
                }
            }
            (PointCloud::new(points), 100)
        }
    };

    let labels = dbscan(&cloud.points, eps, min_pts)?;
    let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let keep = dbscan_keep(&cloud.points, &opts)?;
    println!(
        "{} points, {clusters} clusters, {} noise; kept {}",
        cloud.len(),
        labels.iter().filter(|l| l.is_none()).count(),
        keep.len()
    );
    if planted > 0 {
        let n = cloud.len() - planted;
        let kept_target = keep.iter().filter(|&&i| i < n).count();
        println!(
            "planted outliers kept: {}; target points kept: {kept_target} of {n}",
            keep.len() - kept_target
        );
    }
    if let Some(out) = args.get(3) {
        save_points(&cloud.select(&keep), Path::new(out))?;
        println!("wrote {out}");
    }
    Ok(())
}

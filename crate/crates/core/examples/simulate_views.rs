//! Simulates the multi-aspect sweep of a scene spec and writes a dataset.
//!
//! `cargo run --release --example simulate_views -- [spec.toml] [out_dir]`

use std::path::{Path, PathBuf};

use sarsplat::io::{load_toml, save_dataset, save_scene, Normalization};
use sarsplat::scene_gen::SceneSpec;
use sarsplat::simulate::{simulate, Sweep};
use sarsplat::{RenderOptions, Split};

fn main() -> sarsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spec_path = args
        .first()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/specs/tank.toml"));
    let out = PathBuf::from(args.get(1).map_or("views", String::as_str));

    let spec: SceneSpec = load_toml(&spec_path)?;
    let scene = spec.build()?;
    let mut sweep = Sweep::standard(64, 32, 0.3);
    sweep.ray_cell_m = Some(0.3);
    let views = sweep.views()?;
    let start = std::time::Instant::now();
    let (dataset, max) = simulate(&scene, &views, &RenderOptions::default())?;
    let train = dataset.views.iter().filter(|v| v.split == Split::Train).count();
    println!(
        "{} primitives, {} views ({train} train) in {:.1}s, peak intensity {max:.4}",
        scene.len(),
        dataset.views.len(),
        start.elapsed().as_secs_f64()
    );

    let manifest = save_dataset(&dataset, &out, Normalization::FixedMax { max_value: 1.0 })?;
    save_scene(&scene, &out.join("target.ply"))?;
    println!("wrote {} and target.ply", manifest.display());
    Ok(())
}

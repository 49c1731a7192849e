//! Renders a cuboid building on ground at 45° and prints its range profile.
//!
//! `cargo run --release --example render_building -- [height] [width] [out.png]`

use sarsplat::bands::{building_bands, extent, range_profile};
use sarsplat::raster::{render, RenderOptions};
use sarsplat::scene_gen::{building_scene, CuboidSpec};
use sarsplat::RadarConfig;

fn main() -> sarsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let h: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let w: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let spec = CuboidSpec::new([0.0, 0.0, 0.0], w, 6.0, h);
    let scene = building_scene(&spec, 20.0, 16.0, 1)?;
    // Radar to the +x side, so the +x wall faces it and range grows toward −x.
    let config = RadarConfig::new(0.0, 45.0, 10_000.0, 0.25, 128, 48);
    let img = render(&scene, &config, &RenderOptions::default())?;
    println!("h = {h} m, w = {w} m, {} primitives", scene.len());

    let profile = range_profile(&img, 16..32);
    let top = profile.iter().cloned().fold(0.0, f64::max);
    for (r, v) in profile.iter().enumerate().step_by(2) {
        let depth = (r as f64 + 0.5 - img.height as f64 / 2.0) * config.range_res_m;
        println!("{depth:>7.2} m {:>8.4} {}", v, "#".repeat((60.0 * v / top).round() as usize));
    }
    if let Some(b) = building_bands(&profile) {
        let m = |band: Option<sarsplat::bands::Band>| band.map_or(0.0, |x| extent(&profile, x) * config.range_res_m);
        println!("layover band {:.2} m (expected h·sinθ = {:.2})", m(Some(b.bright)), h * 0.5f64.sqrt());
        println!("roof inside layover {:.2} m, roof beyond layover {:.2} m", m(b.roof_in_layover), m(b.roof_after_layover));
        let dark = (w + h) * 0.5f64.sqrt() - (w - h).max(0.0) * 0.5f64.sqrt();
        println!("dark run {:.2} m (expected {dark:.2})", m(b.shadow));
    }
    if let Some(out) = args.get(2) {
        sarsplat::io::save_image(&img, std::path::Path::new(out), sarsplat::io::Normalization::PerImageMax)?;
        println!("wrote {out}");
    }
    Ok(())
}

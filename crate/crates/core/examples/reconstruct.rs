//! Self-reconstruction of a small composite target from 24 simulated views.
//!
//! `cargo run --release --example reconstruct -- [iterations] [init_points] [seed]`

use sarsplat::pipeline::RoundTrip;

fn main() -> sarsplat::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let rt = RoundTrip::standard(arg(0, 10_000) as usize, arg(1, 2000) as usize, arg(2, 1));

    let r = rt.run()?;
    println!(
        "target {} primitives; trained in {:.1}s to {} primitives (cloned {}, split {}, pruned {})",
        r.target_primitives, r.train_seconds, r.final_primitives, r.cloned, r.split, r.pruned
    );
    println!("train views: psnr {:.2} dB, ssim {:.4}", r.train_psnr, r.train_ssim);
    println!("test views:  psnr {:.2} dB, ssim {:.4}", r.test_psnr, r.test_ssim);
    println!(
        "cloud: {} points, {} after DBSCAN; chamfer {:.4}, precision {:.3}, recall {:.3}, f1 {:.3}",
        r.raw_points, r.filtered_points, r.cloud.chamfer, r.cloud.precision, r.cloud.recall, r.cloud.f1
    );
    if let Some(path) = args.get(3) {
        sarsplat::io::save_scene(&r.scene, std::path::Path::new(path))?;
        println!("wrote {path}");
    }
    Ok(())
}

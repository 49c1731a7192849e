//! Finite-difference check of every gradient component on a batch of random scenes.
//!
//! `cargo run --release --example gradcheck -- [seed] [scenes]`

use sarsplat::gradcheck;

fn main() -> sarsplat::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let scenes = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let start = std::time::Instant::now();
    let report = gradcheck::run(seed, 16, scenes, 10)?;
    for g in &report.groups {
        println!(
            "{:<11} checked {:>5}  failed {:>3}  max rel {:.2e}  max abs {:.2e}",
            g.group, g.checked, g.failed, g.max_rel_err, g.max_abs_err
        );
    }
    println!(
        "{} after {:.1}s",
        if report.passed() { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

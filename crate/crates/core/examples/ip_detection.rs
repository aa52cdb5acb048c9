//! Builds the stolen-model zoo, fingerprints it and prints per-family AUCs.
//!
//! `cargo run --release --example ip_detection [seed]`

use std::time::Instant;

use modelgif::experiments::IpDetectConfig;

fn main() -> modelgif::Result<()> {
    let mut cfg = IpDetectConfig::default();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    let start = Instant::now();
    let out = cfg.run()?;
    for s in &out.report.suspects {
        println!("{:<18} {:<14} d={:.4}", s.id, s.kind, s.distance);
    }
    print!("{}", out.report.auc_table());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

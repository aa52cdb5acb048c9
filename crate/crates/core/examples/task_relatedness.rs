//! Trains one model per rotated-boundary task, compares their gradient
//! fields and checks the affinity against `−|Δθ|`.
//!
//! `cargo run --release --example task_relatedness [seed]`

use modelgif::experiments::TaskRelConfig;

fn main() -> modelgif::Result<()> {
    let mut cfg = TaskRelConfig::default();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    let out = cfg.run()?;
    print!("{}", out.report.affinity.to_csv("affinity"));
    print!("{}", out.report.tree.to_newick(None));
    println!("spearman = {:.4}", out.report.spearman);
    Ok(())
}

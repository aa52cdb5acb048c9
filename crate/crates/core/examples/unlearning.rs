//! Exact versus approximate unlearning, seen through distances to the
//! reference classifier on the forget points.
//!
//! `cargo run --release --example unlearning [seed]`

use modelgif::experiments::UnlearnConfig;

fn main() -> modelgif::Result<()> {
    let mut cfg = UnlearnConfig::default();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    let out = cfg.run()?;
    print!("{}", out.report.to_text());
    print!("{}", out.report.series_csv());
    Ok(())
}

//! Draws reference points three ways and round-trips one set through disk.
//!
//! `cargo run --release --example reference_samplers`

use modelgif::data::{ImageTask, SplitTag};
use modelgif::sampler::{sample_cutmix, sample_pgd, sample_random, CutMixConfig, ReferenceSet};
use modelgif::zoo::{self, PgdConfig, TrainConfig};
use modelgif::{Activation, ArchSpec};

fn main() -> modelgif::Result<()> {
    let task = ImageTask::new(12, 4, 2, 0.1, 0);
    let pool = task.sample(200, 1, 0, SplitTag::Holdout);

    let random = sample_random(&[&pool], 16, 9)?;
    let mixed = sample_cutmix(&[&pool], 16, 9, &CutMixConfig::default())?;

    let arch = ArchSpec::mlp(task.input_shape(), vec![32], 4, Activation::Relu);
    let probe = zoo::train(&arch, &pool, &TrainConfig::new(10, 0.05, 32, 2))?;
    let pgd = PgdConfig {
        steps: 10,
        alpha: 0.01,
        eps: 0.05,
    };
    let adversarial = sample_pgd(&[&pool], 16, &probe, &pgd, 9)?;

    for (name, set) in [
        ("random", &random),
        ("cutmix", &mixed),
        ("pgd", &adversarial),
    ] {
        let (lo, hi) = set
            .points()
            .data()
            .iter()
            .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!(
            "{name:<7} K={} D={} range=[{lo:.3}, {hi:.3}] hash={:016x}",
            set.len(),
            set.dim(),
            set.hash()
        );
    }

    let path = std::env::temp_dir().join("modelgif-example-refs.mgrs");
    mixed.save(&path)?;
    let back = ReferenceSet::load(&path)?;
    println!("round trip identical: {}", back == mixed);
    std::fs::remove_file(path)?;
    Ok(())
}

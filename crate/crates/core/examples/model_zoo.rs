//! Derives a small family of models from one parent and prints the manifest.
//!
//! `cargo run --release --example model_zoo`

use modelgif::checkpoint;
use modelgif::data::{ImageTask, SplitTag};
use modelgif::zoo::{self, ExtractMode, FinetuneMode, Lineage, TrainConfig, ZooEntry, ZooManifest};
use modelgif::{Activation, ArchSpec};

fn main() -> modelgif::Result<()> {
    let task = ImageTask::new(12, 5, 2, 0.1, 0);
    let train = task.sample(400, 1, 0, SplitTag::Train);
    let tune = task.sample(200, 2, 10_000, SplitTag::Holdout);
    let transfer = task.sample(1000, 3, 20_000, SplitTag::Transfer);
    let arch = ArchSpec::mlp(task.input_shape(), vec![32], 5, Activation::Relu);

    let base = TrainConfig::new(20, 0.05, 32, 1);
    let victim = zoo::train(&arch, &train, &base)?;
    let tuned = zoo::finetune(
        &victim,
        &tune,
        FinetuneMode::Last,
        &base.with_epochs(3).with_seed(2),
    )?;
    let pruned = zoo::prune(&victim, 0.5, None)?;
    let stolen = zoo::extract(
        &victim,
        &transfer,
        ExtractMode::Prob,
        &arch,
        &base.with_seed(3),
    )?;

    let holdout = task.sample(300, 4, 30_000, SplitTag::Holdout);
    let mut manifest = ZooManifest::default();
    for (id, kind, parent, seed, model) in [
        ("victim", Lineage::Victim, None, 1, &victim),
        ("tuned", Lineage::FinetuneLast, Some("victim"), 2, &tuned),
        ("pruned", Lineage::Pruned, Some("victim"), 0, &pruned),
        ("stolen", Lineage::ExtractProb, Some("victim"), 3, &stolen),
    ] {
        println!(
            "{id:<7} holdout accuracy {:.3}",
            zoo::accuracy(model, &holdout)?
        );
        manifest.push(ZooEntry {
            id: id.into(),
            kind,
            parent: parent.map(str::to_string),
            seed,
            config_hash: base.hash(),
        });
    }
    manifest.validate()?;
    print!("{}", manifest.to_text());

    let bytes = checkpoint::encode(&stolen);
    println!(
        "checkpoint: {} bytes, decodes equal: {}",
        bytes.len(),
        checkpoint::decode(&bytes)? == stolen
    );
    Ok(())
}

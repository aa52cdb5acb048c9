//! Fingerprints a handful of related and unrelated models, then prints the
//! distance matrix, the affinity matrix and the similarity tree.
//!
//! `cargo run --release --example distances`

use modelgif::analysis::cluster;
use modelgif::data::{ImageTask, SplitTag};
use modelgif::distance::{distance_matrix, to_affinity};
use modelgif::gif::{fingerprint, Baseline};
use modelgif::sampler::sample_random;
use modelgif::zoo::{self, FinetuneMode, TrainConfig};
use modelgif::{Activation, ArchSpec};

fn main() -> modelgif::Result<()> {
    let task = ImageTask::new(12, 5, 2, 0.1, 0);
    let arch = ArchSpec::mlp(task.input_shape(), vec![32], 5, Activation::Relu);
    let cfg = TrainConfig::new(20, 0.05, 32, 0);

    let a = zoo::train(
        &arch,
        &task.sample(400, 1, 0, SplitTag::Train),
        &cfg.with_seed(1),
    )?;
    let a_tuned = zoo::finetune(
        &a,
        &task.sample(200, 2, 0, SplitTag::Holdout),
        FinetuneMode::All,
        &cfg.with_epochs(3),
    )?;
    let b = zoo::train(
        &arch,
        &task.sample(400, 3, 0, SplitTag::Train),
        &cfg.with_seed(2),
    )?;
    let c = zoo::train(
        &arch,
        &task.sample(400, 4, 0, SplitTag::Train),
        &cfg.with_seed(3),
    )?;

    let refs = sample_random(&[&task.sample(256, 5, 0, SplitTag::Holdout)], 64, 6)?;
    let sets = [("a", &a), ("a-tuned", &a_tuned), ("b", &b), ("c", &c)]
        .into_iter()
        .map(|(id, m)| fingerprint(m, id, &refs, Baseline::Zero, 32))
        .collect::<modelgif::Result<Vec<_>>>()?;

    let dm = distance_matrix(&sets)?;
    print!("{}", dm.to_csv("distance"));
    let aff = to_affinity(&dm);
    print!("{}", aff.to_csv("affinity"));
    let tree = cluster(&aff.ids, &aff.values)?;
    print!("{}", tree.to_newick(None));
    print!("{}", tree.to_dot(None));
    Ok(())
}

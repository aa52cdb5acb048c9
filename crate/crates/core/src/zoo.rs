//! Model manufacturing: base training and every derivation the experiments
//! compare against a source model (fine-tuning, pruning, extraction,
//! adversarial hardening, exact and approximate unlearning).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::data::{DatasetSplit, SplitTag};
use crate::error::{Error, Result};
use crate::model::{argmax, ArchSpec, DiffModel, Targets};
use crate::rng::{fnv1a, Rng};
use crate::tensor::Tensor;

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f32, batch: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            lr,
            batch,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        TrainConfig { epochs, ..self }
    }

    pub fn hash(&self) -> u64 {
        fnv1a(
            format!(
                "{}|{}|{}|{}",
                self.epochs,
                self.lr.to_bits(),
                self.batch,
                self.seed
            )
            .as_bytes(),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be non-negative, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Which parameters a training run may update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinetuneMode {
    All,
    Last,
}

impl FromStr for FinetuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FinetuneMode::All),
            "last" => Ok(FinetuneMode::Last),
            other => Err(Error::invalid(format!("unknown fine-tune mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractMode {
    Label,
    Prob,
}

impl FromStr for ExtractMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label" => Ok(ExtractMode::Label),
            "prob" => Ok(ExtractMode::Prob),
            other => Err(Error::invalid(format!("unknown extraction mode `{other}`"))),
        }
    }
}

/// Projected gradient ascent settings: `steps` signed steps of size `alpha`,
/// each followed by projection onto the `eps` l∞-ball around the start point
/// intersected with the unit box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdConfig {
    pub steps: usize,
    pub alpha: f32,
    pub eps: f32,
}

impl PgdConfig {
    pub(crate) fn validate(&self, allow_zero_eps: bool) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("pgd needs at least one step"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("pgd step size must be positive"));
        }
        if !(self.eps > 0.0 || (allow_zero_eps && self.eps == 0.0)) {
            return Err(Error::invalid("pgd budget must be positive"));
        }
        Ok(())
    }
}

/// One projected signed-gradient step from `x` toward larger objective,
/// kept within `eps` of `origin` and inside `[0,1]`.
pub(crate) fn pgd_step(x: &mut [f32], grad: &[f32], origin: &[f32], cfg: &PgdConfig) {
    for ((xi, &g), &o) in x.iter_mut().zip(grad).zip(origin) {
        let step = if g > 0.0 {
            cfg.alpha
        } else if g < 0.0 {
            -cfg.alpha
        } else {
            0.0
        };
        let moved = (*xi + step).clamp(o - cfg.eps, o + cfg.eps);
        *xi = moved.clamp(0.0, 1.0);
    }
}

/// Per-run record of what training touched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_losses: Vec<f32>,
    /// Every sample id that contributed to a gradient step.
    pub seen_ids: BTreeSet<u64>,
}

struct Fit<'a> {
    scope_from: usize,
    adversarial: Option<&'a PgdConfig>,
    mask: Option<&'a [Vec<bool>]>,
}

fn fit(
    start: DiffModel,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    opts: Fit<'_>,
) -> Result<(DiffModel, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = start;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = Rng::derived(cfg.seed, SHUFFLE_STREAM);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let mut xs = data.batch_inputs(chunk);
            let ts = data.targets.select(chunk);
            if let Some(pgd) = opts.adversarial {
                xs = perturb_batch(&model, &xs, &ts, pgd)?;
            }
            let (loss, grads) = model.parameter_gradient(&xs, &ts)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            total += f64::from(loss);
            batches += 1;
            model = model.apply_update(&grads, -cfg.lr, opts.scope_from)?;
            if let Some(mask) = opts.mask {
                model = apply_mask(&model, mask);
            }
            log.seen_ids.extend(chunk.iter().map(|&i| data.ids[i]));
        }
        let mean = (total / batches as f64) as f32;
        if !mean.is_finite() || !model.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        log.epoch_losses.push(mean);
    }
    Ok((model, log))
}

/// PGD on the training loss, labels kept.
fn perturb_batch(model: &DiffModel, xs: &Tensor, ts: &Targets, pgd: &PgdConfig) -> Result<Tensor> {
    let origin = xs.clone();
    let mut adv = xs.clone();
    for _ in 0..pgd.steps {
        let (_, g) = model.loss_input_gradient(&adv, ts)?;
        pgd_step(adv.data_mut(), g.data(), origin.data(), pgd);
    }
    Ok(adv)
}

/// Trains a fresh model; `config.seed` fixes both initialization and
/// shuffling.
pub fn train(arch: &ArchSpec, data: &DatasetSplit, config: &TrainConfig) -> Result<DiffModel> {
    train_logged(arch, data, config).map(|(m, _)| m)
}

pub fn train_logged(
    arch: &ArchSpec,
    data: &DatasetSplit,
    config: &TrainConfig,
) -> Result<(DiffModel, TrainLog)> {
    let init = arch.init(&mut Rng::derived(config.seed, INIT_STREAM))?;
    fit(
        init,
        data,
        config,
        Fit {
            scope_from: 0,
            adversarial: None,
            mask: None,
        },
    )
}

/// Continues training `parent`. With [`FinetuneMode::Last`] only the final
/// affine layer moves; every other parameter stays bit-identical.
pub fn finetune(
    parent: &DiffModel,
    data: &DatasetSplit,
    mode: FinetuneMode,
    config: &TrainConfig,
) -> Result<DiffModel> {
    let scope_from = match mode {
        FinetuneMode::All => 0,
        FinetuneMode::Last => parent.last_layer_param_start(),
    };
    fit(
        parent.clone(),
        data,
        config,
        Fit {
            scope_from,
            adversarial: None,
            mask: None,
        },
    )
    .map(|(m, _)| m)
}

/// Global magnitude pruning: the `fraction` of weights (biases exempt) with
/// the smallest magnitude are zeroed; ties break toward the earlier
/// parameter. With a fine-tune set, training follows with the pruning mask
/// held fixed.
pub fn prune(
    parent: &DiffModel,
    fraction: f32,
    finetune: Option<(&DatasetSplit, &TrainConfig)>,
) -> Result<DiffModel> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "prune fraction must lie in [0,1], got {fraction}"
        )));
    }
    let params = parent.parameters();
    let is_weight = |i: usize| i.is_multiple_of(2);
    let mut ranked: Vec<(f32, usize, usize)> = params
        .iter()
        .enumerate()
        .filter(|(i, _)| is_weight(*i))
        .flat_map(|(pi, t)| {
            t.data()
                .iter()
                .enumerate()
                .map(move |(j, v)| (v.abs(), pi, j))
        })
        .collect();
    let count = (f64::from(fraction) * ranked.len() as f64).round() as usize;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut mask: Vec<Vec<bool>> = params.iter().map(|t| vec![true; t.len()]).collect();
    for &(_, pi, j) in &ranked[..count] {
        mask[pi][j] = false;
    }
    let pruned = apply_mask(parent, &mask);
    match finetune {
        Some((data, config)) if config.epochs > 0 => fit(
            pruned,
            data,
            config,
            Fit {
                scope_from: 0,
                adversarial: None,
                mask: Some(&mask),
            },
        )
        .map(|(m, _)| m),
        _ => Ok(pruned),
    }
}

fn apply_mask(model: &DiffModel, mask: &[Vec<bool>]) -> DiffModel {
    model.map_parameters(|i, t| {
        for (v, &keep) in t.data_mut().iter_mut().zip(&mask[i]) {
            if !keep {
                *v = 0.0;
            }
        }
    })
}

/// Victim-labeled copy of `queries`: arg-max labels or full probability
/// rows.
pub fn victim_targets(
    victim: &DiffModel,
    queries: &DatasetSplit,
    mode: ExtractMode,
) -> Result<Targets> {
    let classes = victim.output_dim();
    if classes < 2 {
        return Err(Error::invalid("extraction needs a classification victim"));
    }
    let probs = victim.probabilities(&queries.inputs)?;
    Ok(match mode {
        ExtractMode::Label => Targets::Classes {
            classes,
            labels: (0..probs.rows()).map(|r| argmax(probs.row(r))).collect(),
        },
        ExtractMode::Prob => Targets::Soft {
            classes,
            probs: probs.into_data(),
        },
    })
}

/// Trains a surrogate of `surrogate_arch` from scratch on the victim's
/// answers to `queries`. The query set should be disjoint from the victim's
/// training split.
pub fn extract(
    victim: &DiffModel,
    queries: &DatasetSplit,
    mode: ExtractMode,
    surrogate_arch: &ArchSpec,
    config: &TrainConfig,
) -> Result<DiffModel> {
    if mode == ExtractMode::Label && victim.output_dim() < 2 {
        return Err(Error::invalid(
            "label extraction rejects regression victims",
        ));
    }
    let labeled = queries.with_targets(victim_targets(victim, queries, mode)?)?;
    train(surrogate_arch, &labeled, config)
}

/// Adversarial training: every batch is replaced by its PGD perturbation
/// (labels kept) before the gradient step.
pub fn adversarial_harden(
    model: &DiffModel,
    data: &DatasetSplit,
    pgd: &PgdConfig,
    config: &TrainConfig,
) -> Result<DiffModel> {
    pgd.validate(true)?;
    fit(
        model.clone(),
        data,
        config,
        Fit {
            scope_from: 0,
            adversarial: Some(pgd),
            mask: None,
        },
    )
    .map(|(m, _)| m)
}

/// Accuracy under PGD on the training loss.
pub fn robust_accuracy(model: &DiffModel, data: &DatasetSplit, pgd: &PgdConfig) -> Result<f32> {
    let labels = data
        .class_labels()
        .ok_or_else(|| Error::invalid("robust accuracy needs class labels"))?;
    let adv = perturb_batch(model, &data.inputs, &data.targets, pgd)?;
    let pred = model.predict(&adv)?;
    Ok(agreement(&pred, labels))
}

pub fn accuracy(model: &DiffModel, data: &DatasetSplit) -> Result<f32> {
    let labels = data
        .class_labels()
        .ok_or_else(|| Error::invalid("accuracy needs class labels"))?;
    Ok(agreement(&model.predict(&data.inputs)?, labels))
}

pub fn agreement(a: &[usize], b: &[usize]) -> f32 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f32 / a.len().max(1) as f32
}

/// Splits `data` into (retained, forget) by sample id, preserving order.
pub fn split_forget(
    data: &DatasetSplit,
    forget_ids: &BTreeSet<u64>,
) -> Result<(Option<DatasetSplit>, Option<DatasetSplit>)> {
    let present: HashSet<u64> = data.ids.iter().copied().collect();
    if let Some(missing) = forget_ids.iter().find(|id| !present.contains(id)) {
        return Err(Error::invalid(format!(
            "forget id {missing} is not in the training split"
        )));
    }
    let (mut keep, mut drop) = (Vec::new(), Vec::new());
    for (i, id) in data.ids.iter().enumerate() {
        if forget_ids.contains(id) {
            drop.push(i);
        } else {
            keep.push(i);
        }
    }
    Ok((
        data.subset(&keep, data.tag),
        data.subset(&drop, SplitTag::Forget),
    ))
}

/// Retrains from scratch on `train \ forget`. The returned log lists every
/// id that reached a gradient step.
pub fn unlearn_exact(
    data: &DatasetSplit,
    forget_ids: &BTreeSet<u64>,
    arch: &ArchSpec,
    config: &TrainConfig,
) -> Result<(DiffModel, TrainLog)> {
    let (retained, _) = split_forget(data, forget_ids)?;
    let retained =
        retained.ok_or_else(|| Error::invalid("forget set covers the entire training split"))?;
    train_logged(arch, &retained, config)
}

/// Post-hoc forgetting by gradient ascent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxUnlearnConfig {
    /// Ascent steps per epoch; each is followed by one descent step on a
    /// retained-set batch.
    pub ascent_steps: usize,
    pub ascent_lr: f32,
    pub retain_lr: f32,
    pub batch: usize,
    pub seed: u64,
}

/// Per epoch: `ascent_steps` rounds of (gradient ascent on a forget batch,
/// gradient descent on a retained batch). Returns one checkpoint per epoch.
pub fn unlearn_approx(
    reference: &DiffModel,
    data: &DatasetSplit,
    forget_ids: &BTreeSet<u64>,
    epochs: usize,
    config: &ApproxUnlearnConfig,
) -> Result<Vec<DiffModel>> {
    if epochs == 0 {
        return Err(Error::invalid(
            "approximate unlearning needs at least one epoch",
        ));
    }
    if config.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let (retained, forget) = split_forget(data, forget_ids)?;
    let forget = forget.ok_or_else(|| Error::invalid("forget set is empty"))?;
    let retained =
        retained.ok_or_else(|| Error::invalid("forget set covers the entire training split"))?;
    let mut rng = Rng::derived(config.seed, SHUFFLE_STREAM);
    let mut model = reference.clone();
    let mut checkpoints = Vec::with_capacity(epochs);
    let mut forget_order: Vec<usize> = (0..forget.len()).collect();
    let mut retain_order: Vec<usize> = (0..retained.len()).collect();
    let (mut fi, mut ri) = (usize::MAX, usize::MAX);
    let next = |order: &mut Vec<usize>, cursor: &mut usize, rng: &mut Rng| -> Vec<usize> {
        if *cursor >= order.len() {
            rng.shuffle(order);
            *cursor = 0;
        }
        let end = (*cursor + config.batch).min(order.len());
        let out = order[*cursor..end].to_vec();
        *cursor = end;
        out
    };
    for epoch in 0..epochs {
        for _ in 0..config.ascent_steps {
            let idx = next(&mut forget_order, &mut fi, &mut rng);
            let (loss, g) = model
                .parameter_gradient(&forget.batch_inputs(&idx), &forget.targets.select(&idx))?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            model = model.apply_update(&g, config.ascent_lr, 0)?;
            let idx = next(&mut retain_order, &mut ri, &mut rng);
            let (loss, g) = model
                .parameter_gradient(&retained.batch_inputs(&idx), &retained.targets.select(&idx))?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            model = model.apply_update(&g, -config.retain_lr, 0)?;
        }
        checkpoints.push(model.clone());
    }
    Ok(checkpoints)
}

/// Lineage of a zoo member relative to its parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lineage {
    Victim,
    FinetuneAll,
    FinetuneLast,
    Pruned,
    ExtractLabel,
    ExtractProb,
    ExtractAdv,
    Transfer,
    Independent,
    UnlearnExact,
    UnlearnApprox,
    Unrelated,
}

impl Lineage {
    pub const ALL: [Lineage; 12] = [
        Lineage::Victim,
        Lineage::FinetuneAll,
        Lineage::FinetuneLast,
        Lineage::Pruned,
        Lineage::ExtractLabel,
        Lineage::ExtractProb,
        Lineage::ExtractAdv,
        Lineage::Transfer,
        Lineage::Independent,
        Lineage::UnlearnExact,
        Lineage::UnlearnApprox,
        Lineage::Unrelated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Lineage::Victim => "victim",
            Lineage::FinetuneAll => "finetune-all",
            Lineage::FinetuneLast => "finetune-last",
            Lineage::Pruned => "pruned",
            Lineage::ExtractLabel => "extract-label",
            Lineage::ExtractProb => "extract-prob",
            Lineage::ExtractAdv => "extract-adv",
            Lineage::Transfer => "transfer",
            Lineage::Independent => "independent",
            Lineage::UnlearnExact => "unlearn-exact",
            Lineage::UnlearnApprox => "unlearn-approx",
            Lineage::Unrelated => "unrelated",
        }
    }

    /// Kinds trained from scratch with no parent model.
    pub fn is_root(self) -> bool {
        matches!(
            self,
            Lineage::Victim | Lineage::Independent | Lineage::Unrelated
        )
    }
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lineage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lineage::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown lineage kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZooEntry {
    pub id: String,
    pub kind: Lineage,
    pub parent: Option<String>,
    pub seed: u64,
    pub config_hash: u64,
}

/// Line-oriented record of a zoo: one `key=value` record per model.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZooManifest {
    pub entries: Vec<ZooEntry>,
}

impl ZooManifest {
    pub fn push(&mut self, entry: ZooEntry) {
        self.entries.push(entry);
    }

    pub fn get(&self, id: &str) -> Option<&ZooEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Every non-root entry names an existing parent, ids are unique and the
    /// parent graph has no cycle.
    pub fn validate(&self) -> Result<()> {
        let mut by_id: HashMap<&str, &ZooEntry> = HashMap::new();
        for e in &self.entries {
            if e.id.is_empty() || e.id.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("bad model id `{}`", e.id)));
            }
            if by_id.insert(&e.id, e).is_some() {
                return Err(Error::invalid(format!("duplicate model id `{}`", e.id)));
            }
        }
        for e in &self.entries {
            match (&e.parent, e.kind.is_root()) {
                (None, false) => {
                    return Err(Error::invalid(format!(
                        "`{}` ({}) needs a parent",
                        e.id, e.kind
                    )));
                }
                (Some(p), _) if !by_id.contains_key(p.as_str()) => {
                    return Err(Error::invalid(format!(
                        "`{}` names unknown parent `{p}`",
                        e.id
                    )));
                }
                _ => {}
            }
            let mut seen = HashSet::new();
            let mut cur = e;
            while let Some(p) = &cur.parent {
                if !seen.insert(cur.id.as_str()) {
                    return Err(Error::invalid(format!("lineage cycle through `{}`", e.id)));
                }
                cur = by_id[p.as_str()];
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "id={} kind={} parent={} seed={} config={:016x}\n",
                e.id,
                e.kind,
                e.parent.as_deref().unwrap_or("-"),
                e.seed,
                e.config_hash
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = ZooManifest::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| Error::format("manifest", format!("line {}: {why}", n + 1));
            let mut fields: HashMap<&str, &str> = HashMap::new();
            for tok in line.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| bad("expected key=value"))?;
                fields.insert(k, v);
            }
            let get = |k: &str| {
                fields
                    .get(k)
                    .copied()
                    .ok_or_else(|| bad(&format!("missing `{k}`")))
            };
            manifest.push(ZooEntry {
                id: get("id")?.to_string(),
                kind: get("kind")?.parse().map_err(|_| bad("unknown kind"))?,
                parent: match get("parent")? {
                    "-" => None,
                    p => Some(p.to_string()),
                },
                seed: get("seed")?.parse().map_err(|_| bad("bad seed"))?,
                config_hash: u64::from_str_radix(get("config")?, 16)
                    .map_err(|_| bad("bad config hash"))?,
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_blobs;
    use crate::model::{Activation, Layer};

    fn blob_arch() -> ArchSpec {
        ArchSpec::mlp(vec![2], vec![8], 2, Activation::Tanh)
    }

    #[test]
    fn zero_lr_keeps_initialization() {
        let data = gaussian_blobs(40, 0.05, 1);
        let cfg = TrainConfig::new(3, 0.0, 8, 11);
        let trained = train(&blob_arch(), &data, &cfg).unwrap();
        let init = blob_arch()
            .init(&mut Rng::derived(11, INIT_STREAM))
            .unwrap();
        assert_eq!(trained, init);
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let data = gaussian_blobs(200, 0.05, 2);
        let arch = ArchSpec::mlp(vec![2], vec![], 2, Activation::Tanh);
        let (m, log) = train_logged(&arch, &data, &TrainConfig::new(200, 0.5, 16, 3)).unwrap();
        assert!(accuracy(&m, &data).unwrap() >= 0.99);
        assert!(log.epoch_losses.last() < log.epoch_losses.first());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = gaussian_blobs(60, 0.1, 4);
        let cfg = TrainConfig::new(5, 0.1, 8, 21);
        let a = crate::checkpoint::encode(&train(&blob_arch(), &data, &cfg).unwrap());
        let b = crate::checkpoint::encode(&train(&blob_arch(), &data, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = gaussian_blobs(20, 0.1, 4);
        let err = train(
            &blob_arch(),
            &data,
            &TrainConfig::new(50, f32::INFINITY, 4, 1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }));
    }

    #[test]
    fn finetune_last_freezes_trunk() {
        let data = gaussian_blobs(40, 0.1, 5);
        let parent = train(&blob_arch(), &data, &TrainConfig::new(5, 0.2, 8, 1)).unwrap();
        let same = finetune(
            &parent,
            &data,
            FinetuneMode::Last,
            &TrainConfig::new(0, 0.2, 8, 2),
        )
        .unwrap();
        assert_eq!(same, parent);
        let child = finetune(
            &parent,
            &data,
            FinetuneMode::Last,
            &TrainConfig::new(5, 0.5, 8, 2),
        )
        .unwrap();
        let start = parent.last_layer_param_start();
        let (pp, cp) = (parent.parameters(), child.parameters());
        for i in 0..start {
            assert_eq!(pp[i], cp[i]);
        }
        assert_ne!(pp[start], cp[start]);
        assert!("middle".parse::<FinetuneMode>().is_err());
    }

    #[test]
    fn prune_half_of_four_weights() {
        let m = DiffModel::new(
            vec![4],
            vec![Layer::dense(
                Tensor::new(vec![4, 1], vec![1.0, -4.0, 0.2, 3.0]).unwrap(),
                Tensor::from_vec(vec![0.5]),
            )],
        )
        .unwrap();
        let p = prune(&m, 0.5, None).unwrap();
        assert_eq!(p.parameters()[0].data(), &[0.0, -4.0, 0.0, 3.0]);
        assert_eq!(p.parameters()[1].data(), &[0.5]);
        let all = prune(&m, 1.0, None).unwrap();
        assert!(all.parameters()[0].data().iter().all(|&v| v == 0.0));
        assert_eq!(all.parameters()[1].data(), &[0.5]);
        assert_eq!(prune(&m, 0.0, None).unwrap(), m);
        assert_eq!(prune(&p, 0.5, None).unwrap(), p);
        assert!(prune(&m, 1.5, None).is_err());
    }

    #[test]
    fn pruning_mask_survives_finetune() {
        let data = gaussian_blobs(40, 0.1, 5);
        let parent = train(&blob_arch(), &data, &TrainConfig::new(5, 0.2, 8, 1)).unwrap();
        let cfg = TrainConfig::new(3, 0.2, 8, 9);
        let p = prune(&parent, 0.5, Some((&data, &cfg))).unwrap();
        let zeros: usize = p
            .parameters()
            .iter()
            .step_by(2)
            .map(|t| t.data().iter().filter(|&&v| v == 0.0).count())
            .sum();
        let total: usize = p.parameters().iter().step_by(2).map(|t| t.len()).sum();
        assert_eq!(zeros, (total as f32 * 0.5).round() as usize);
    }

    #[test]
    fn label_targets_are_victim_argmax() {
        let data = gaussian_blobs(30, 0.1, 6);
        let victim = train(&blob_arch(), &data, &TrainConfig::new(5, 0.2, 8, 1)).unwrap();
        let Targets::Classes { labels, .. } =
            victim_targets(&victim, &data, ExtractMode::Label).unwrap()
        else {
            panic!("expected hard labels")
        };
        assert_eq!(labels, victim.predict(&data.inputs).unwrap());
        let regression = DiffModel::new(
            vec![2],
            vec![Layer::dense(
                Tensor::zeros(vec![2, 1]),
                Tensor::zeros(vec![1]),
            )],
        )
        .unwrap();
        assert!(extract(
            &regression,
            &data,
            ExtractMode::Label,
            &blob_arch(),
            &TrainConfig::new(1, 0.1, 4, 1)
        )
        .is_err());
    }

    #[test]
    fn extraction_with_zero_epochs_is_random_init() {
        let data = gaussian_blobs(30, 0.1, 6);
        let victim = train(&blob_arch(), &data, &TrainConfig::new(5, 0.2, 8, 1)).unwrap();
        let cfg = TrainConfig::new(0, 0.2, 8, 77);
        let s = extract(&victim, &data, ExtractMode::Prob, &blob_arch(), &cfg).unwrap();
        assert_eq!(
            s,
            blob_arch()
                .init(&mut Rng::derived(77, INIT_STREAM))
                .unwrap()
        );
    }

    #[test]
    fn zero_budget_hardening_equals_plain_training() {
        let data = gaussian_blobs(40, 0.1, 8);
        let start = train(&blob_arch(), &data, &TrainConfig::new(2, 0.2, 8, 1)).unwrap();
        let cfg = TrainConfig::new(3, 0.2, 8, 5);
        let pgd = PgdConfig {
            steps: 3,
            alpha: 0.01,
            eps: 0.0,
        };
        let hardened = adversarial_harden(&start, &data, &pgd, &cfg).unwrap();
        let plain = finetune(&start, &data, FinetuneMode::All, &cfg).unwrap();
        assert_eq!(hardened, plain);
    }

    #[test]
    fn exact_unlearning_contract() {
        let data = gaussian_blobs(40, 0.1, 9);
        let cfg = TrainConfig::new(3, 0.2, 8, 4);
        let (m, _) = unlearn_exact(&data, &BTreeSet::new(), &blob_arch(), &cfg).unwrap();
        assert_eq!(m, train(&blob_arch(), &data, &cfg).unwrap());

        let forget: BTreeSet<u64> = [1, 5, 7].into_iter().collect();
        let (_, log) = unlearn_exact(&data, &forget, &blob_arch(), &cfg).unwrap();
        assert!(log.seen_ids.is_disjoint(&forget));
        assert_eq!(log.seen_ids.len(), 37);

        let everything: BTreeSet<u64> = data.ids.iter().copied().collect();
        assert!(unlearn_exact(&data, &everything, &blob_arch(), &cfg).is_err());
        let stranger: BTreeSet<u64> = [999].into_iter().collect();
        assert!(unlearn_exact(&data, &stranger, &blob_arch(), &cfg).is_err());
    }

    #[test]
    fn approx_unlearning_without_steps_is_identity() {
        let data = gaussian_blobs(40, 0.1, 9);
        let reference = train(&blob_arch(), &data, &TrainConfig::new(3, 0.2, 8, 4)).unwrap();
        let forget: BTreeSet<u64> = [0, 1].into_iter().collect();
        let cfg = ApproxUnlearnConfig {
            ascent_steps: 0,
            ascent_lr: 0.1,
            retain_lr: 0.1,
            batch: 4,
            seed: 3,
        };
        let cps = unlearn_approx(&reference, &data, &forget, 3, &cfg).unwrap();
        assert_eq!(cps.len(), 3);
        assert!(cps.iter().all(|m| *m == reference));
        assert!(unlearn_approx(&reference, &data, &forget, 0, &cfg).is_err());
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let mut m = ZooManifest::default();
        m.push(ZooEntry {
            id: "victim".into(),
            kind: Lineage::Victim,
            parent: None,
            seed: 1,
            config_hash: 0xabc,
        });
        m.push(ZooEntry {
            id: "ft-0".into(),
            kind: Lineage::FinetuneAll,
            parent: Some("victim".into()),
            seed: 2,
            config_hash: 0xdef,
        });
        let parsed = ZooManifest::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);

        let orphan = "id=a kind=pruned parent=- seed=1 config=0\n";
        assert!(ZooManifest::parse(orphan).is_err());
        let cycle = "id=a kind=pruned parent=b seed=1 config=0\nid=b kind=pruned parent=a seed=1 config=0\n";
        assert!(ZooManifest::parse(cycle).is_err());
    }
}

//! End-to-end protocols: the model zoo each one needs, its reference
//! points, and the report built from the resulting distance matrix.
//!
//! Every random choice is derived from the protocol's master seed, so a
//! config and a seed pin down every model, reference point and number.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::analysis::{self, Dendrogram, DetectionReport, Suspect, UnlearningReport};
use crate::data::{DatasetSplit, ImageTask, RotatedFamily, RotatedTask, SplitTag};
use crate::distance::{distance_matrix, to_affinity, AffinityMatrix, DistanceMatrix};
use crate::error::{Error, Result};
use crate::gif::{fingerprint, Baseline, GiFCurveSet};
use crate::model::{Activation, ArchSpec, DiffModel};
use crate::rng::{fnv1a, Rng};
use crate::sampler::{
    sample_cutmix, sample_pgd, sample_random, CutMixConfig, ReferenceSet, SamplerKind,
};
use crate::zoo::{
    self, ApproxUnlearnConfig, ExtractMode, FinetuneMode, Lineage, PgdConfig, TrainConfig,
    ZooEntry, ZooManifest,
};

/// Seed for the named sub-task of a run.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    fnv1a(format!("{master}/{label}").as_bytes())
}

/// Trained models in manifest order.
#[derive(Clone, Debug)]
pub struct Zoo {
    pub manifest: ZooManifest,
    pub models: Vec<DiffModel>,
}

impl Zoo {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&DiffModel> {
        let i = self.manifest.entries.iter().position(|e| e.id == id)?;
        Some(&self.models[i])
    }

    /// Fingerprints every model against `refset`, in manifest order.
    pub fn fingerprints(
        &self,
        refset: &ReferenceSet,
        baseline: Baseline,
        steps: usize,
    ) -> Result<Vec<GiFCurveSet>> {
        self.manifest
            .entries
            .iter()
            .zip(&self.models)
            .map(|(e, m)| fingerprint(m, &e.id, refset, baseline, steps))
            .collect()
    }
}

/// Where reference points come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefSpec {
    pub kind: SamplerKind,
    pub count: usize,
    pub cutmix: CutMixConfig,
    pub pgd: PgdConfig,
}

impl RefSpec {
    pub fn random(count: usize) -> Self {
        RefSpec {
            kind: SamplerKind::Random,
            count,
            cutmix: CutMixConfig::default(),
            pgd: PgdConfig {
                steps: 10,
                alpha: 0.01,
                eps: 0.05,
            },
        }
    }

    fn sample(
        &self,
        pool: &[&DatasetSplit],
        probe: Option<&DiffModel>,
        seed: u64,
    ) -> Result<ReferenceSet> {
        match self.kind {
            SamplerKind::Random => sample_random(pool, self.count, seed),
            SamplerKind::CutMix => sample_cutmix(pool, self.count, seed, &self.cutmix),
            SamplerKind::Pgd => {
                let probe =
                    probe.ok_or_else(|| Error::invalid("PGD references need a probe model"))?;
                sample_pgd(pool, self.count, probe, &self.pgd, seed)
            }
            SamplerKind::Explicit => Err(Error::invalid(
                "explicit references are fixed by the protocol",
            )),
        }
    }
}

fn entry(
    id: impl Into<String>,
    kind: Lineage,
    parent: Option<&str>,
    seed: u64,
    config: &TrainConfig,
) -> ZooEntry {
    ZooEntry {
        id: id.into(),
        kind,
        parent: parent.map(str::to_string),
        seed,
        config_hash: config.hash(),
    }
}

/// Stolen-model detection on a 10-class synthetic image task.
#[derive(Clone, Debug, PartialEq)]
pub struct IpDetectConfig {
    pub seed: u64,
    pub side: usize,
    pub classes: usize,
    pub bumps_per_class: usize,
    pub noise: f32,
    pub train_size: usize,
    pub transfer_size: usize,
    pub tune_size: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub prune_fractions: Vec<f32>,
    pub extract: TrainConfig,
    pub harden: TrainConfig,
    pub harden_pgd: PgdConfig,
    pub per_family: usize,
    pub independents: usize,
    pub refs: RefSpec,
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for IpDetectConfig {
    fn default() -> Self {
        IpDetectConfig {
            seed: 7,
            side: 16,
            classes: 10,
            bumps_per_class: 3,
            noise: 0.1,
            train_size: 400,
            transfer_size: 8000,
            tune_size: 500,
            hidden: vec![64],
            train: TrainConfig::new(30, 0.05, 32, 0),
            finetune: TrainConfig::new(5, 0.01, 32, 0),
            prune_fractions: vec![0.2, 0.4, 0.6],
            extract: TrainConfig::new(40, 0.05, 32, 0),
            harden: TrainConfig::new(3, 0.01, 32, 0),
            harden_pgd: PgdConfig {
                steps: 3,
                alpha: 0.01,
                eps: 0.03,
            },
            per_family: 3,
            independents: 6,
            refs: RefSpec::random(256),
            steps: 64,
            baseline: Baseline::Zero,
        }
    }
}

impl IpDetectConfig {
    pub fn task(&self) -> ImageTask {
        ImageTask::new(self.side, self.classes, self.bumps_per_class, self.noise, 0)
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec::mlp(
            self.task().input_shape(),
            self.hidden.clone(),
            self.classes,
            Activation::Tanh,
        )
    }

    fn split(&self, label: &str, n: usize, id_base: u64, tag: SplitTag) -> DatasetSplit {
        self.task()
            .sample(n, sub_seed(self.seed, label), id_base, tag)
    }

    pub fn victim_train(&self) -> DatasetSplit {
        self.split("victim-train", self.train_size, 0, SplitTag::Train)
    }

    pub fn transfer(&self) -> DatasetSplit {
        self.split("transfer", self.transfer_size, 1 << 40, SplitTag::Transfer)
    }

    pub fn tune(&self) -> DatasetSplit {
        self.split("tune", self.tune_size, 2 << 40, SplitTag::Holdout)
    }

    pub fn reference_pool(&self) -> DatasetSplit {
        self.split(
            "reference-pool",
            self.refs.count.max(64) * 4,
            3 << 40,
            SplitTag::Holdout,
        )
    }

    pub fn build_zoo(&self) -> Result<Zoo> {
        if self.per_family == 0 && self.independents == 0 {
            return Err(Error::invalid("no models requested"));
        }
        let arch = self.arch();
        let victim_seed = sub_seed(self.seed, "victim");
        let victim_cfg = self.train.with_seed(victim_seed);
        let victim = zoo::train(&arch, &self.victim_train(), &victim_cfg)
            .map_err(|e| e.for_model("victim"))?;
        let transfer = self.transfer();
        let tune = self.tune();

        let mut jobs: Vec<(String, Lineage, u64)> = Vec::new();
        for kind in [
            Lineage::FinetuneAll,
            Lineage::FinetuneLast,
            Lineage::Pruned,
            Lineage::ExtractLabel,
            Lineage::ExtractProb,
            Lineage::ExtractAdv,
        ] {
            for i in 0..self.per_family {
                let id = format!("{kind}-{}", i + 1);
                jobs.push((id.clone(), kind, sub_seed(self.seed, &id)));
            }
        }
        for i in 0..self.independents {
            let id = format!("independent-{}", i + 1);
            jobs.push((id.clone(), Lineage::Independent, sub_seed(self.seed, &id)));
        }

        let built: Vec<(ZooEntry, DiffModel)> = jobs
            .par_iter()
            .enumerate()
            .map(|(j, (id, kind, seed))| -> Result<(ZooEntry, DiffModel)> {
                let index = j % self.per_family.max(1);
                let v = Some("victim");
                let out = (|| -> Result<(ZooEntry, DiffModel)> {
                    Ok(match kind {
                        Lineage::FinetuneAll | Lineage::FinetuneLast => {
                            let mode = if *kind == Lineage::FinetuneAll {
                                FinetuneMode::All
                            } else {
                                FinetuneMode::Last
                            };
                            let cfg = self.finetune.with_seed(*seed);
                            (
                                entry(id, *kind, v, *seed, &cfg),
                                zoo::finetune(&victim, &tune, mode, &cfg)?,
                            )
                        }
                        Lineage::Pruned => {
                            let fraction = self.prune_fractions[index % self.prune_fractions.len()];
                            let cfg = self.finetune.with_seed(*seed);
                            (
                                entry(id, *kind, v, *seed, &cfg),
                                zoo::prune(&victim, fraction, Some((&tune, &cfg)))?,
                            )
                        }
                        Lineage::ExtractLabel | Lineage::ExtractProb => {
                            let mode = if *kind == Lineage::ExtractLabel {
                                ExtractMode::Label
                            } else {
                                ExtractMode::Prob
                            };
                            let cfg = self.extract.with_seed(*seed);
                            (
                                entry(id, *kind, v, *seed, &cfg),
                                zoo::extract(&victim, &transfer, mode, &arch, &cfg)?,
                            )
                        }
                        Lineage::ExtractAdv => {
                            let cfg = self.extract.with_seed(*seed);
                            let surrogate =
                                zoo::extract(&victim, &transfer, ExtractMode::Label, &arch, &cfg)?;
                            let labeled = transfer.with_targets(zoo::victim_targets(
                                &victim,
                                &transfer,
                                ExtractMode::Label,
                            )?)?;
                            let hcfg = self.harden.with_seed(*seed);
                            let hardened = zoo::adversarial_harden(
                                &surrogate,
                                &labeled,
                                &self.harden_pgd,
                                &hcfg,
                            )?;
                            (entry(id, *kind, v, *seed, &cfg), hardened)
                        }
                        _ => {
                            let cfg = self.train.with_seed(*seed);
                            let data = self.split(
                                id,
                                self.train_size,
                                (4 + j as u64) << 40,
                                SplitTag::Train,
                            );
                            (
                                entry(id, *kind, None, *seed, &cfg),
                                zoo::train(&arch, &data, &cfg)?,
                            )
                        }
                    })
                })();
                out.map_err(|e| e.for_model(id))
            })
            .collect::<Result<_>>()?;

        let mut manifest = ZooManifest::default();
        manifest.push(entry(
            "victim",
            Lineage::Victim,
            None,
            victim_seed,
            &victim_cfg,
        ));
        let mut models = vec![victim];
        for (e, m) in built {
            manifest.push(e);
            models.push(m);
        }
        manifest.validate()?;
        Ok(Zoo { manifest, models })
    }

    /// References drawn from a held-out pool; PGD sampling probes the victim.
    pub fn sample_refs(&self, zoo: &Zoo) -> Result<ReferenceSet> {
        let pool = self.reference_pool();
        self.refs
            .sample(&[&pool], zoo.get("victim"), sub_seed(self.seed, "refs"))
    }

    pub fn report(
        &self,
        manifest: &ZooManifest,
        matrix: &DistanceMatrix,
    ) -> Result<DetectionReport> {
        let v = matrix
            .index_of("victim")
            .ok_or_else(|| Error::invalid("distance matrix has no victim"))?;
        let mut suspects = Vec::new();
        for e in &manifest.entries {
            if e.kind == Lineage::Victim {
                continue;
            }
            let i = matrix.index_of(&e.id).ok_or_else(|| {
                Error::invalid(format!("model `{}` missing from the distance matrix", e.id))
            })?;
            suspects.push(Suspect {
                id: e.id.clone(),
                kind: e.kind,
                distance: matrix.get(v, i),
            });
        }
        analysis::detection_report("victim", suspects, Lineage::Independent)
    }

    pub fn run(&self) -> Result<IpDetectOutcome> {
        let zoo = self.build_zoo()?;
        let refset = self.sample_refs(&zoo)?;
        let matrix = distance_matrix(&zoo.fingerprints(&refset, self.baseline, self.steps)?)?;
        let report = self.report(&zoo.manifest, &matrix)?;
        Ok(IpDetectOutcome {
            zoo,
            refset,
            matrix,
            report,
        })
    }
}

#[derive(Clone, Debug)]
pub struct IpDetectOutcome {
    pub zoo: Zoo,
    pub refset: ReferenceSet,
    pub matrix: DistanceMatrix,
    pub report: DetectionReport,
}

/// Task relatedness on a family of rotated two-class boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskRelConfig {
    pub seed: u64,
    pub side: usize,
    pub noise: f32,
    pub angles: Vec<f32>,
    /// Adds a label-permuted copy of the task at this angle.
    pub permuted_control: Option<f32>,
    pub train_size: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub refs: RefSpec,
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for TaskRelConfig {
    fn default() -> Self {
        TaskRelConfig {
            seed: 11,
            side: 16,
            noise: 0.05,
            angles: vec![0.0, 15.0, 30.0, 60.0, 90.0],
            permuted_control: Some(0.0),
            train_size: 1000,
            hidden: vec![32],
            train: TrainConfig::new(20, 0.05, 32, 0),
            refs: RefSpec::random(128),
            steps: 64,
            baseline: Baseline::Zero,
        }
    }
}

impl TaskRelConfig {
    pub fn family(&self) -> RotatedFamily {
        RotatedFamily {
            side: self.side,
            noise: self.noise,
        }
    }

    pub fn tasks(&self) -> Vec<RotatedTask> {
        let mut tasks: Vec<RotatedTask> =
            self.angles.iter().map(|&a| RotatedTask::new(a)).collect();
        if let Some(a) = self.permuted_control {
            tasks.push(RotatedTask::permuted(a));
        }
        tasks
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec::mlp(
            self.family().input_shape(),
            self.hidden.clone(),
            2,
            Activation::Relu,
        )
    }

    pub fn build_zoo(&self) -> Result<Zoo> {
        let tasks = self.tasks();
        if tasks.is_empty() {
            return Err(Error::invalid("no models requested"));
        }
        let arch = self.arch();
        let data_seed = sub_seed(self.seed, "data");
        let built: Vec<(ZooEntry, DiffModel)> = tasks
            .par_iter()
            .map(|task| {
                let id = task.name();
                let seed = sub_seed(self.seed, &id);
                let cfg = self.train.with_seed(seed);
                let data = self
                    .family()
                    .sample(task, self.train_size, data_seed, SplitTag::Train);
                let model = zoo::train(&arch, &data, &cfg).map_err(|e| e.for_model(&id))?;
                Ok((entry(id, Lineage::Independent, None, seed, &cfg), model))
            })
            .collect::<Result<_>>()?;
        let mut manifest = ZooManifest::default();
        let mut models = Vec::new();
        for (e, m) in built {
            manifest.push(e);
            models.push(m);
        }
        manifest.validate()?;
        Ok(Zoo { manifest, models })
    }

    pub fn sample_refs(&self) -> Result<ReferenceSet> {
        let pool = self.family().sample(
            &RotatedTask::new(0.0),
            self.refs.count.max(64) * 4,
            sub_seed(self.seed, "reference-pool"),
            SplitTag::Holdout,
        );
        let probe = match self.refs.kind {
            SamplerKind::Pgd => Some(self.probe()?),
            _ => None,
        };
        self.refs
            .sample(&[&pool], probe.as_ref(), sub_seed(self.seed, "refs"))
    }

    /// A model of the unrotated task kept outside the zoo, used as the PGD probe.
    pub fn probe(&self) -> Result<DiffModel> {
        let seed = sub_seed(self.seed, "probe");
        let data = self.family().sample(
            &RotatedTask::new(0.0),
            self.train_size,
            sub_seed(self.seed, "probe-data"),
            SplitTag::Train,
        );
        zoo::train(&self.arch(), &data, &self.train.with_seed(seed))
            .map_err(|e| e.for_model("probe"))
    }

    /// Ground-truth relatedness `−|Δθ|` between two task names.
    pub fn ground_truth(&self, a: &str, b: &str) -> Result<f64> {
        let angle = |name: &str| {
            self.tasks()
                .into_iter()
                .find(|t| t.name() == name)
                .map(|t| f64::from(t.effective_angle()))
                .ok_or_else(|| Error::invalid(format!("unknown task `{name}`")))
        };
        Ok(-(angle(a)? - angle(b)?).abs())
    }

    pub fn report(&self, matrix: &DistanceMatrix) -> Result<TaskRelReport> {
        let n = matrix.len();
        let mut truth = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                truth[i * n + j] = self.ground_truth(&matrix.ids[i], &matrix.ids[j])?;
            }
        }
        let affinity = to_affinity(matrix);
        let spearman = analysis::spearman_matrices(&affinity.values, &truth, n)?;
        let tree = analysis::cluster(&affinity.ids, &affinity.values)?;
        Ok(TaskRelReport {
            affinity,
            ground_truth: truth,
            spearman,
            tree,
        })
    }

    pub fn run(&self) -> Result<TaskRelOutcome> {
        let zoo = self.build_zoo()?;
        let refset = self.sample_refs()?;
        let matrix = distance_matrix(&zoo.fingerprints(&refset, self.baseline, self.steps)?)?;
        let report = self.report(&matrix)?;
        Ok(TaskRelOutcome {
            zoo,
            matrix,
            report,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TaskRelReport {
    pub affinity: AffinityMatrix,
    /// `N×N`, aligned with the affinity ids.
    pub ground_truth: Vec<f64>,
    pub spearman: f64,
    pub tree: Dendrogram,
}

#[derive(Clone, Debug)]
pub struct TaskRelOutcome {
    pub zoo: Zoo,
    pub matrix: DistanceMatrix,
    pub report: TaskRelReport,
}

/// Unlearning verification with the forget set as reference points.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnConfig {
    pub seed: u64,
    pub side: usize,
    pub classes: usize,
    pub bumps_per_class: usize,
    pub noise: f32,
    pub train_size: usize,
    pub forget: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub approx_epochs: usize,
    pub approx: ApproxUnlearnConfig,
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            seed: 3,
            side: 16,
            classes: 10,
            bumps_per_class: 3,
            noise: 0.3,
            train_size: 512,
            forget: 128,
            hidden: vec![64],
            train: TrainConfig::new(40, 0.05, 32, 0),
            approx_epochs: 8,
            approx: ApproxUnlearnConfig {
                ascent_steps: 4,
                ascent_lr: 0.01,
                retain_lr: 0.01,
                batch: 32,
                seed: 0,
            },
            steps: 64,
            baseline: Baseline::Zero,
        }
    }
}

impl UnlearnConfig {
    pub fn task(&self) -> ImageTask {
        ImageTask::new(self.side, self.classes, self.bumps_per_class, self.noise, 0)
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec::mlp(
            self.task().input_shape(),
            self.hidden.clone(),
            self.classes,
            Activation::Relu,
        )
    }

    pub fn train_split(&self) -> DatasetSplit {
        self.task().sample(
            self.train_size,
            sub_seed(self.seed, "train"),
            0,
            SplitTag::Train,
        )
    }

    pub fn forget_ids(&self, data: &DatasetSplit) -> Result<BTreeSet<u64>> {
        if self.forget == 0 || self.forget >= data.len() {
            return Err(Error::invalid(format!(
                "forget set size {} must be in 1..{}",
                self.forget,
                data.len()
            )));
        }
        let mut ids = data.ids.clone();
        Rng::new(sub_seed(self.seed, "forget")).shuffle(&mut ids);
        Ok(ids.into_iter().take(self.forget).collect())
    }

    pub fn approx_id(epoch: usize) -> String {
        format!("approx-{epoch:02}")
    }

    pub fn build_zoo(&self) -> Result<Zoo> {
        let arch = self.arch();
        let data = self.train_split();
        let forget = self.forget_ids(&data)?;
        let ids = ["reference", "unrelated", "exact"];
        let trained: Vec<(ZooEntry, DiffModel)> = ids
            .par_iter()
            .map(|&id| {
                let seed = sub_seed(self.seed, id);
                let cfg = self.train.with_seed(seed);
                let out = (|| -> Result<(ZooEntry, DiffModel)> {
                    Ok(match id {
                        "exact" => {
                            let (m, _) = zoo::unlearn_exact(&data, &forget, &arch, &cfg)?;
                            (
                                entry(id, Lineage::UnlearnExact, Some("reference"), seed, &cfg),
                                m,
                            )
                        }
                        "unrelated" => (
                            entry(id, Lineage::Unrelated, None, seed, &cfg),
                            zoo::train(&arch, &data, &cfg)?,
                        ),
                        _ => (
                            entry(id, Lineage::Victim, None, seed, &cfg),
                            zoo::train(&arch, &data, &cfg)?,
                        ),
                    })
                })();
                out.map_err(|e| e.for_model(id))
            })
            .collect::<Result<_>>()?;
        let mut manifest = ZooManifest::default();
        let mut models = Vec::new();
        for (e, m) in trained {
            manifest.push(e);
            models.push(m);
        }
        let approx_seed = sub_seed(self.seed, "approx");
        let approx_cfg = ApproxUnlearnConfig {
            seed: approx_seed,
            ..self.approx
        };
        let checkpoints =
            zoo::unlearn_approx(&models[0], &data, &forget, self.approx_epochs, &approx_cfg)
                .map_err(|e| e.for_model("approx"))?;
        let hash_cfg = TrainConfig::new(
            self.approx_epochs,
            self.approx.ascent_lr,
            self.approx.batch,
            approx_seed,
        );
        for (e, m) in checkpoints.into_iter().enumerate() {
            manifest.push(entry(
                Self::approx_id(e + 1),
                Lineage::UnlearnApprox,
                Some("reference"),
                approx_seed,
                &hash_cfg,
            ));
            models.push(m);
        }
        manifest.validate()?;
        Ok(Zoo { manifest, models })
    }

    /// The forget points themselves.
    pub fn sample_refs(&self) -> Result<ReferenceSet> {
        let data = self.train_split();
        let (_, forget) = zoo::split_forget(&data, &self.forget_ids(&data)?)?;
        ReferenceSet::from_dataset(&forget.ok_or_else(|| Error::invalid("forget set is empty"))?)
    }

    pub fn report(&self, matrix: &DistanceMatrix) -> Result<UnlearningReport> {
        let d = |id: &str| {
            matrix.by_id("reference", id).ok_or_else(|| {
                Error::invalid(format!("model `{id}` missing from the distance matrix"))
            })
        };
        let series = (1..=self.approx_epochs)
            .map(|e| d(&Self::approx_id(e)))
            .collect::<Result<Vec<_>>>()?;
        analysis::unlearning_report(d("unrelated")?, d("exact")?, &series)
    }

    pub fn run(&self) -> Result<UnlearnOutcome> {
        let zoo = self.build_zoo()?;
        let refset = self.sample_refs()?;
        let matrix = distance_matrix(&zoo.fingerprints(&refset, self.baseline, self.steps)?)?;
        let report = self.report(&matrix)?;
        Ok(UnlearnOutcome {
            zoo,
            matrix,
            report,
        })
    }
}

#[derive(Clone, Debug)]
pub struct UnlearnOutcome {
    pub zoo: Zoo,
    pub matrix: DistanceMatrix,
    pub report: UnlearningReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ_by_label() {
        assert_ne!(sub_seed(1, "a"), sub_seed(1, "b"));
        assert_ne!(sub_seed(1, "a"), sub_seed(2, "a"));
        assert_eq!(sub_seed(5, "x"), sub_seed(5, "x"));
    }

    #[test]
    fn empty_zoo_is_rejected() {
        let cfg = IpDetectConfig {
            per_family: 0,
            independents: 0,
            ..IpDetectConfig::default()
        };
        let err = cfg.build_zoo().unwrap_err();
        assert!(err.to_string().contains("no models requested"));
    }

    #[test]
    fn ground_truth_uses_effective_angles() {
        let cfg = TaskRelConfig::default();
        assert_eq!(cfg.ground_truth("rot00", "rot90").unwrap(), -90.0);
        let names: Vec<String> = cfg.tasks().iter().map(RotatedTask::name).collect();
        assert_eq!(cfg.ground_truth(&names[0], &names[5]).unwrap(), 0.0);
    }

    #[test]
    fn taskrel_pgd_references_use_an_outside_probe() {
        let cfg = TaskRelConfig {
            side: 8,
            train_size: 64,
            hidden: vec![8],
            train: TrainConfig::new(2, 0.05, 16, 0),
            refs: RefSpec {
                kind: SamplerKind::Pgd,
                ..RefSpec::random(12)
            },
            ..TaskRelConfig::default()
        };
        let a = cfg.sample_refs().unwrap();
        assert_eq!(a.len(), 12);
        assert!(a.points().data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, cfg.sample_refs().unwrap());
    }

    #[test]
    fn small_unlearning_run_is_well_formed() {
        let cfg = UnlearnConfig {
            side: 8,
            train_size: 64,
            forget: 8,
            hidden: vec![8],
            train: TrainConfig::new(2, 0.05, 16, 0),
            approx_epochs: 3,
            steps: 8,
            ..UnlearnConfig::default()
        };
        let out = cfg.run().unwrap();
        assert_eq!(out.zoo.len(), 6);
        assert_eq!(out.report.approx_series.len(), 3);
        assert!(out.matrix.len() == 6);
    }
}

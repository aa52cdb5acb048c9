//! Batch front end: a `key = value` run config, five pipeline stages and
//! their on-disk artifacts.
//!
//! Config keys (blank lines and `#` comments are ignored; any key that the
//! chosen experiment does not read is rejected):
//!
//! ```text
//! experiment        ipdetect | taskrel | unlearn | fingerprint-only
//! output            artifact directory (required)
//! seed              master seed
//! refs              reference points K (not for unlearn: the forget set is used)
//! sampler           random | cutmix | pgd | explicit
//! refs.file         MGRS reference set, required by sampler = explicit
//! pgd.steps  pgd.alpha  pgd.eps          PGD sampler settings
//! cutmix.min  cutmix.max                 patch area range
//! steps             curve samples S
//! baseline          zero | random
//! baseline.seed     seed for random baselines
//! data.side  data.classes  data.bumps  data.noise  data.train
//! data.transfer  data.tune  data.forget
//! model.hidden      comma-separated hidden widths
//! train.epochs  train.lr  train.batch
//! finetune.epochs  finetune.lr  extract.epochs  extract.lr
//! harden.epochs  harden.lr  harden.steps  harden.alpha  harden.eps
//! prune.fractions   comma-separated
//! zoo.per_family  zoo.independents
//! taskrel.angles    comma-separated degrees
//! taskrel.permuted  angle of the label-permuted control, or `none`
//! unlearn.epochs  unlearn.ascent_steps  unlearn.ascent_lr  unlearn.retain_lr
//! ```
//!
//! Every artifact records the hash of the resolved config: text files in a
//! header comment or the CSV corner cell, binary files in a `.meta` sidecar.
//! Later stages refuse artifacts from a different config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::analysis;
use crate::checkpoint;
use crate::codec::write_atomic;
use crate::distance::{distance_matrix, to_affinity, DistanceMatrix, Metric};
use crate::error::{Error, Result};
use crate::experiments::{IpDetectConfig, RefSpec, TaskRelConfig, UnlearnConfig, Zoo};
use crate::gif::{anchor_hash, fingerprint, Baseline, GiFCurveSet};
use crate::rng::fnv1a;
use crate::sampler::{ReferenceSet, SamplerKind, DEFAULT_REFS};
use crate::zoo::{PgdConfig, TrainConfig, ZooManifest};

#[derive(Debug, Parser)]
#[command(
    name = "modelgif",
    about = "Compare models through their input-gradient fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run config (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for training, fingerprinting and distances.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Curve samples S.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Reference points K.
    #[arg(long, global = true)]
    pub refs: Option<usize>,
    /// `zero` or `random`.
    #[arg(long, global = true)]
    pub baseline: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the experiment's model zoo and write the manifest.
    Zoo,
    /// Draw the shared reference points.
    SampleRefs,
    /// Extract fingerprints for the given models (all when none are named).
    Fingerprint { models: Vec<String> },
    /// Pairwise distance and affinity matrices.
    Distances,
    /// Experiment-specific report files.
    Report,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::IncomparableFingerprints { .. }
        | Error::IncomparableCurves(_)
        | Error::ArtifactMismatch { .. } => 3,
        Error::ModelDiverged { .. } | Error::TrainingDiverged { .. } => 4,
        _ => 1,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(s) = cli.steps {
        overrides.push(("steps", s.to_string()));
    }
    if let Some(k) = cli.refs {
        overrides.push(("refs", k.to_string()));
    }
    if let Some(b) = &cli.baseline {
        overrides.push(("baseline", b.clone()));
    }
    let config = RunConfig::parse(&text, &overrides, path.parent())?;
    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Zoo => cmd_zoo(&config).map(|_| ()),
        Command::SampleRefs => cmd_sample_refs(&config).map(|_| ()),
        Command::Fingerprint { models } => cmd_fingerprint(&config, models).map(|_| ()),
        Command::Distances => cmd_distances(&config).map(|_| ()),
        Command::Report => cmd_report(&config),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    IpDetect(IpDetectConfig),
    TaskRel(TaskRelConfig),
    Unlearn(UnlearnConfig),
    /// A zoo of independent models with no attack families; only the
    /// matrices and the tree are reported.
    FingerprintOnly(IpDetectConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::IpDetect(_) => "ipdetect",
            Experiment::TaskRel(_) => "taskrel",
            Experiment::Unlearn(_) => "unlearn",
            Experiment::FingerprintOnly(_) => "fingerprint-only",
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) => c.steps,
            Experiment::TaskRel(c) => c.steps,
            Experiment::Unlearn(c) => c.steps,
        }
    }

    pub fn baseline(&self) -> Baseline {
        match self {
            Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) => c.baseline,
            Experiment::TaskRel(c) => c.baseline,
            Experiment::Unlearn(c) => c.baseline,
        }
    }

    pub fn build_zoo(&self) -> Result<Zoo> {
        match self {
            Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) => c.build_zoo(),
            Experiment::TaskRel(c) => c.build_zoo(),
            Experiment::Unlearn(c) => c.build_zoo(),
        }
    }

    pub fn sample_refs(&self, zoo: &Zoo) -> Result<ReferenceSet> {
        match self {
            Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) => c.sample_refs(zoo),
            Experiment::TaskRel(c) => c.sample_refs(),
            Experiment::Unlearn(c) => c.sample_refs(),
        }
    }
}

/// A validated run config.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub output: PathBuf,
    /// Reference set supplied as a file (sampler = explicit).
    pub refs_file: Option<PathBuf>,
    pub hash: u64,
}

struct Keys {
    map: BTreeMap<String, String>,
}

impl Keys {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, key: &str, slot: &mut Vec<T>) -> Result<()> {
        if let Some(v) = self.map.remove(key) {
            *slot = v
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad list `{v}` for `{key}`")))?;
        }
        Ok(())
    }

    fn train(&mut self, prefix: &str, cfg: &mut TrainConfig, with_batch: bool) -> Result<()> {
        self.set(&format!("{prefix}.epochs"), &mut cfg.epochs)?;
        self.set(&format!("{prefix}.lr"), &mut cfg.lr)?;
        if with_batch {
            self.set(&format!("{prefix}.batch"), &mut cfg.batch)?;
        }
        Ok(())
    }

    fn pgd(&mut self, prefix: &str, cfg: &mut PgdConfig) -> Result<()> {
        self.set(&format!("{prefix}.steps"), &mut cfg.steps)?;
        self.set(&format!("{prefix}.alpha"), &mut cfg.alpha)?;
        self.set(&format!("{prefix}.eps"), &mut cfg.eps)
    }

    fn refs(&mut self, spec: &mut RefSpec) -> Result<()> {
        self.set("refs", &mut spec.count)?;
        if let Some(kind) = self.map.remove("sampler") {
            spec.kind = SamplerKind::from_str(&kind).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.pgd("pgd", &mut spec.pgd)?;
        self.set("cutmix.min", &mut spec.cutmix.min_area)?;
        self.set("cutmix.max", &mut spec.cutmix.max_area)
    }

    fn curves(&mut self, steps: &mut usize, baseline: &mut Baseline) -> Result<()> {
        self.set("steps", steps)?;
        let seed: Option<u64> = self.take("baseline.seed")?;
        match self.map.remove("baseline").as_deref() {
            None | Some("zero") => {
                if seed.is_some() {
                    return Err(Error::Config(
                        "`baseline.seed` needs baseline = random".into(),
                    ));
                }
                *baseline = Baseline::Zero;
            }
            Some("random") => *baseline = Baseline::Random(seed.unwrap_or(0)),
            Some(other) => return Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
        Ok(())
    }

    fn image_data(
        &mut self,
        side: &mut usize,
        classes: &mut usize,
        bumps: &mut usize,
        noise: &mut f32,
    ) -> Result<()> {
        self.set("data.side", side)?;
        self.set("data.classes", classes)?;
        self.set("data.bumps", bumps)?;
        self.set("data.noise", noise)
    }

    fn ip(&mut self, c: &mut IpDetectConfig) -> Result<()> {
        self.set("seed", &mut c.seed)?;
        self.image_data(
            &mut c.side,
            &mut c.classes,
            &mut c.bumps_per_class,
            &mut c.noise,
        )?;
        self.set("data.train", &mut c.train_size)?;
        self.set("data.transfer", &mut c.transfer_size)?;
        self.set("data.tune", &mut c.tune_size)?;
        self.list("model.hidden", &mut c.hidden)?;
        self.train("train", &mut c.train, true)?;
        self.train("finetune", &mut c.finetune, false)?;
        self.train("extract", &mut c.extract, false)?;
        self.train("harden", &mut c.harden, false)?;
        self.pgd("harden", &mut c.harden_pgd)?;
        self.list("prune.fractions", &mut c.prune_fractions)?;
        self.set("zoo.per_family", &mut c.per_family)?;
        self.set("zoo.independents", &mut c.independents)?;
        self.refs(&mut c.refs)?;
        self.curves(&mut c.steps, &mut c.baseline)?;
        for batch in [
            &mut c.finetune.batch,
            &mut c.extract.batch,
            &mut c.harden.batch,
        ] {
            *batch = c.train.batch;
        }
        if c.prune_fractions.is_empty() {
            return Err(Error::Config("`prune.fractions` is empty".into()));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses config text, applies `overrides` (flag values) and validates.
    /// Relative paths resolve against `base`.
    pub fn parse(text: &str, overrides: &[(&str, String)], base: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if map.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{k}`",
                    n + 1
                )));
            }
        }
        for (k, v) in overrides {
            map.insert(k.to_string(), v.clone());
        }
        let mut keys = Keys { map };
        let kind: String = keys
            .take("experiment")?
            .ok_or_else(|| Error::Config("missing `experiment`".into()))?;
        let output: PathBuf = keys
            .take("output")?
            .ok_or_else(|| Error::Config("missing `output`".into()))?;
        let resolve = |p: PathBuf| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        };
        let refs_file: Option<PathBuf> = keys.take("refs.file")?.map(resolve);
        let experiment = match kind.as_str() {
            "ipdetect" => {
                let mut c = IpDetectConfig::default();
                keys.ip(&mut c)?;
                Experiment::IpDetect(c)
            }
            "fingerprint-only" => {
                let mut c = IpDetectConfig {
                    per_family: 0,
                    independents: 4,
                    refs: RefSpec::random(DEFAULT_REFS),
                    ..IpDetectConfig::default()
                };
                keys.ip(&mut c)?;
                if c.per_family != 0 {
                    return Err(Error::Config(
                        "fingerprint-only zoos have no attack families".into(),
                    ));
                }
                Experiment::FingerprintOnly(c)
            }
            "taskrel" => {
                let mut c = TaskRelConfig::default();
                keys.set("seed", &mut c.seed)?;
                keys.set("data.side", &mut c.side)?;
                keys.set("data.noise", &mut c.noise)?;
                keys.set("data.train", &mut c.train_size)?;
                keys.list("model.hidden", &mut c.hidden)?;
                keys.train("train", &mut c.train, true)?;
                keys.list("taskrel.angles", &mut c.angles)?;
                if let Some(p) = keys.map.remove("taskrel.permuted") {
                    c.permuted_control = match p.as_str() {
                        "none" => None,
                        a => Some(a.parse().map_err(|_| {
                            Error::Config(format!("bad value `{a}` for `taskrel.permuted`"))
                        })?),
                    };
                }
                keys.refs(&mut c.refs)?;
                keys.curves(&mut c.steps, &mut c.baseline)?;
                Experiment::TaskRel(c)
            }
            "unlearn" => {
                let mut c = UnlearnConfig::default();
                keys.set("seed", &mut c.seed)?;
                keys.image_data(
                    &mut c.side,
                    &mut c.classes,
                    &mut c.bumps_per_class,
                    &mut c.noise,
                )?;
                keys.set("data.train", &mut c.train_size)?;
                keys.set("data.forget", &mut c.forget)?;
                keys.list("model.hidden", &mut c.hidden)?;
                keys.train("train", &mut c.train, true)?;
                keys.set("unlearn.epochs", &mut c.approx_epochs)?;
                keys.set("unlearn.ascent_steps", &mut c.approx.ascent_steps)?;
                keys.set("unlearn.ascent_lr", &mut c.approx.ascent_lr)?;
                keys.set("unlearn.retain_lr", &mut c.approx.retain_lr)?;
                c.approx.batch = c.train.batch;
                keys.curves(&mut c.steps, &mut c.baseline)?;
                Experiment::Unlearn(c)
            }
            other => return Err(Error::Config(format!("unknown experiment `{other}`"))),
        };
        if let Some(k) = keys.map.keys().next() {
            return Err(Error::Config(format!(
                "key `{k}` is unknown or does not apply to experiment `{kind}`"
            )));
        }
        let empty = match &experiment {
            Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) => {
                c.per_family == 0 && c.independents == 0
            }
            Experiment::TaskRel(c) => c.tasks().is_empty(),
            Experiment::Unlearn(_) => false,
        };
        if empty {
            return Err(Error::Config("no models requested".into()));
        }
        if experiment.steps() < 2 {
            return Err(Error::Config("`steps` must be at least 2".into()));
        }
        let sampler = match &experiment {
            Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) => Some(c.refs),
            Experiment::TaskRel(c) => Some(c.refs),
            Experiment::Unlearn(_) => None,
        };
        if let Some(spec) = sampler {
            if spec.count == 0 {
                return Err(Error::Config("`refs` must be positive".into()));
            }
            match (spec.kind, &refs_file) {
                (SamplerKind::Explicit, None) => {
                    return Err(Error::Config("sampler = explicit needs `refs.file`".into()))
                }
                (SamplerKind::Explicit, Some(p)) if !p.is_file() => {
                    return Err(Error::Config(format!(
                        "reference file {} does not exist",
                        p.display()
                    )))
                }
                (SamplerKind::Explicit, _) => {}
                (_, Some(_)) => {
                    return Err(Error::Config("`refs.file` needs sampler = explicit".into()))
                }
                _ => {}
            }
        } else if refs_file.is_some() {
            return Err(Error::Config(
                "unlearn uses the forget set as references; `refs.file` does not apply".into(),
            ));
        }

        let mut canonical = format!("{experiment:?}");
        if let Some(p) = &refs_file {
            let bytes = fs::read(p)?;
            let _ = write!(canonical, "|refs={:08x}", crc32fast::hash(&bytes));
        }
        Ok(RunConfig {
            hash: fnv1a(canonical.as_bytes()),
            experiment,
            output: resolve(output),
            refs_file,
        })
    }

    pub fn hash_tag(&self) -> String {
        format!("config={:016x}", self.hash)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output.join("manifest.txt")
    }

    pub fn model_path(&self, id: &str) -> PathBuf {
        self.output.join("models").join(format!("{id}.mgmd"))
    }

    pub fn refs_path(&self) -> PathBuf {
        self.output.join("refs.mgrs")
    }

    pub fn fingerprint_path(&self, id: &str) -> PathBuf {
        self.output.join("fingerprints").join(format!("{id}.mgif"))
    }

    pub fn distances_path(&self) -> PathBuf {
        self.output.join("distances.csv")
    }

    pub fn affinity_path(&self) -> PathBuf {
        self.output.join("affinity.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output.join("report")
    }

    /// Checks a `config=<hex>` tag against this config.
    fn check_tag(&self, artifact: &Path, tag: &str) -> Result<()> {
        let found = tag
            .trim()
            .strip_prefix("config=")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| {
                Error::format(
                    "artifact",
                    format!("{} has no config hash", artifact.display()),
                )
            })?;
        if found != self.hash {
            return Err(Error::ArtifactMismatch {
                artifact: artifact.display().to_string(),
                expected: self.hash,
                found,
            });
        }
        Ok(())
    }

    fn write_binary(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(path, bytes)?;
        write_atomic(
            &meta_path(path),
            format!("{}\n", self.hash_tag()).as_bytes(),
        )
    }

    fn write_text(&self, path: &Path, text: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(path, text.as_bytes())
    }

    fn require(&self, path: &Path, stage: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} is missing; run `{stage}` first",
                path.display()
            )))
        }
    }

    fn read_binary(&self, path: &Path, stage: &str) -> Result<Vec<u8>> {
        self.require(path, stage)?;
        let meta = meta_path(path);
        self.require(&meta, stage)?;
        self.check_tag(path, &fs::read_to_string(&meta)?)?;
        Ok(fs::read(path)?)
    }

    pub fn load_manifest(&self) -> Result<ZooManifest> {
        let path = self.manifest_path();
        self.require(&path, "zoo")?;
        let text = fs::read_to_string(&path)?;
        let header = text.lines().next().unwrap_or("");
        self.check_tag(&path, header.trim_start_matches('#'))?;
        ZooManifest::parse(&text)
    }

    pub fn load_zoo(&self) -> Result<Zoo> {
        let manifest = self.load_manifest()?;
        let models = manifest
            .entries
            .iter()
            .map(|e| checkpoint::decode(&self.read_binary(&self.model_path(&e.id), "zoo")?))
            .collect::<Result<_>>()?;
        Ok(Zoo { manifest, models })
    }

    pub fn load_refs(&self) -> Result<ReferenceSet> {
        ReferenceSet::decode(&self.read_binary(&self.refs_path(), "sample-refs")?)
    }

    pub fn load_fingerprint(&self, id: &str) -> Result<GiFCurveSet> {
        GiFCurveSet::decode(
            &self.read_binary(&self.fingerprint_path(id), "fingerprint")?,
            id,
        )
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Trains the zoo and writes the manifest plus one checkpoint per model.
pub fn cmd_zoo(config: &RunConfig) -> Result<ZooManifest> {
    let zoo = config.experiment.build_zoo()?;
    for (e, m) in zoo.manifest.entries.iter().zip(&zoo.models) {
        config.write_binary(&config.model_path(&e.id), &checkpoint::encode(m))?;
    }
    let text = format!("# {}\n{}", config.hash_tag(), zoo.manifest.to_text());
    config.write_text(&config.manifest_path(), &text)?;
    Ok(zoo.manifest)
}

pub fn cmd_sample_refs(config: &RunConfig) -> Result<ReferenceSet> {
    let refset = match &config.refs_file {
        Some(p) => ReferenceSet::load(p)?,
        None => {
            let needs_probe = matches!(
                &config.experiment,
                Experiment::IpDetect(c) | Experiment::FingerprintOnly(c) if c.refs.kind == SamplerKind::Pgd
            ) || matches!(&config.experiment, Experiment::TaskRel(c) if c.refs.kind == SamplerKind::Pgd);
            let zoo = if needs_probe {
                config.load_zoo()?
            } else {
                Zoo {
                    manifest: ZooManifest::default(),
                    models: Vec::new(),
                }
            };
            config.experiment.sample_refs(&zoo)?
        }
    };
    config.write_binary(&config.refs_path(), &refset.encode())?;
    Ok(refset)
}

/// Fingerprints the named models, or every model in the manifest.
pub fn cmd_fingerprint(config: &RunConfig, models: &[String]) -> Result<Vec<PathBuf>> {
    let manifest = config.load_manifest()?;
    let refset = config.load_refs()?;
    let ids: Vec<String> = if models.is_empty() {
        manifest.entries.iter().map(|e| e.id.clone()).collect()
    } else {
        for id in models {
            if manifest.get(id).is_none() {
                return Err(Error::Config(format!(
                    "model `{id}` is not in the manifest"
                )));
            }
        }
        models.to_vec()
    };
    let mut written = Vec::with_capacity(ids.len());
    for id in &ids {
        let model = checkpoint::decode(&config.read_binary(&config.model_path(id), "zoo")?)?;
        let set = fingerprint(
            &model,
            id,
            &refset,
            config.experiment.baseline(),
            config.experiment.steps(),
        )?;
        let path = config.fingerprint_path(id);
        config.write_binary(&path, &set.encode())?;
        written.push(path);
    }
    Ok(written)
}

/// Loads every manifest model's fingerprint and writes the distance and
/// affinity matrices.
pub fn cmd_distances(config: &RunConfig) -> Result<DistanceMatrix> {
    let manifest = config.load_manifest()?;
    let missing: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| !config.fingerprint_path(&e.id).is_file())
        .map(|e| e.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing fingerprints for: {}",
            missing.join(", ")
        )));
    }
    let sets = manifest
        .entries
        .iter()
        .map(|e| config.load_fingerprint(&e.id))
        .collect::<Result<Vec<_>>>()?;
    let matrix = distance_matrix(&sets)?;
    let tag = config.hash_tag();
    config.write_text(&config.distances_path(), &matrix.to_csv(&tag))?;
    config.write_text(&config.affinity_path(), &to_affinity(&matrix).to_csv(&tag))?;
    Ok(matrix)
}

pub fn load_distances(config: &RunConfig) -> Result<DistanceMatrix> {
    let path = config.distances_path();
    config.require(&path, "distances")?;
    let refset = config.load_refs()?;
    let anchor = anchor_hash(&refset, config.experiment.baseline());
    let (corner, matrix) = DistanceMatrix::from_csv(
        &fs::read_to_string(&path)?,
        Metric::IntegratedCosine,
        anchor,
        refset.len(),
    )?;
    config.check_tag(&path, &corner)?;
    Ok(matrix)
}

/// Writes the tree and the experiment's report files.
pub fn cmd_report(config: &RunConfig) -> Result<()> {
    let manifest = config.load_manifest()?;
    let matrix = load_distances(config)?;
    for id in &matrix.ids {
        if manifest.get(id).is_none() {
            return Err(Error::IncomparableFingerprints {
                left: id.clone(),
                right: "manifest".into(),
                reason: "model is not part of this zoo".into(),
            });
        }
    }
    let tag = config.hash_tag();
    let header = format!("# {tag}\n");
    let dir = config.report_dir();
    let affinity = to_affinity(&matrix);
    let tree = analysis::cluster(&affinity.ids, &affinity.values)?;
    config.write_text(&dir.join("tree.nwk"), &tree.to_newick(Some(&tag)))?;
    config.write_text(&dir.join("tree.dot"), &tree.to_dot(Some(&tag)))?;
    match &config.experiment {
        Experiment::IpDetect(c) => {
            let report = c.report(&manifest, &matrix)?;
            config.write_text(
                &dir.join("detection.txt"),
                &(header.clone() + &report.to_text()),
            )?;
            config.write_text(
                &dir.join("auc.csv"),
                &(header.clone() + &report.auc_table()),
            )?;
            config.write_text(&dir.join("roc.csv"), &(header + &report.roc_csv()))?;
        }
        Experiment::TaskRel(c) => {
            let report = c.report(&matrix)?;
            config.write_text(
                &dir.join("spearman.txt"),
                &format!("{header}spearman = {:.6}\n", report.spearman),
            )?;
        }
        Experiment::Unlearn(c) => {
            let report = c.report(&matrix)?;
            config.write_text(
                &dir.join("unlearning.txt"),
                &(header.clone() + &report.to_text()),
            )?;
            config.write_text(
                &dir.join("unlearning.csv"),
                &(header + &report.series_csv()),
            )?;
        }
        Experiment::FingerprintOnly(_) => {}
    }
    Ok(())
}

//! Reference points: the shared inputs every curve is anchored to.
//!
//! Three strategies: two-stage random draws from a pool of datasets, CutMix
//! patch mixing of two random draws, and PGD ascent of a probe model's
//! scalarized output starting from random draws. All outputs lie in the unit
//! box and are pure functions of `(inputs, config, seed)`.

use std::fs;
use std::path::Path;

use crate::codec::{write_atomic, Reader, Writer};
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::model::DiffModel;
use crate::rng::{fnv1a, Rng};
use crate::tensor::Tensor;
use crate::zoo::{pgd_step, PgdConfig};

pub const MAGIC: &[u8; 4] = b"MGRS";
pub const VERSION: u16 = 1;
const KIND: &str = "reference set";

const RANDOM_STREAM: u64 = 0x7261;
const CUTMIX_STREAM: u64 = 0x636d;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SamplerKind {
    Random = 0,
    CutMix = 1,
    Pgd = 2,
    /// Points supplied by the caller (e.g. a forget set).
    Explicit = 3,
}

impl SamplerKind {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => SamplerKind::Random,
            1 => SamplerKind::CutMix,
            2 => SamplerKind::Pgd,
            3 => SamplerKind::Explicit,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::CutMix => "cutmix",
            SamplerKind::Pgd => "pgd",
            SamplerKind::Explicit => "explicit",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SamplerKind::Random),
            "cutmix" => Ok(SamplerKind::CutMix),
            "pgd" => Ok(SamplerKind::Pgd),
            "explicit" => Ok(SamplerKind::Explicit),
            other => Err(Error::invalid(format!("unknown sampler `{other}`"))),
        }
    }
}

/// Reference points per fingerprint when a run does not say otherwise.
pub const DEFAULT_REFS: usize = 1000;

/// Equality compares the persisted content (points, sampler kind, seed) and
/// ignores the in-memory provenance fields.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    /// `[K, D]`.
    points: Tensor,
    pub kind: SamplerKind,
    pub seed: u64,
    /// Distribution id of the (first) source sample behind each point. Not
    /// serialized.
    pub sources: Vec<u32>,
    /// PGD settings when `kind == Pgd`. Not serialized.
    pub pgd: Option<PgdConfig>,
}

impl PartialEq for ReferenceSet {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.kind == other.kind && self.seed == other.seed
    }
}

impl ReferenceSet {
    /// Wraps explicit points, e.g. the forget set of an unlearning audit.
    pub fn from_points(points: Tensor, kind: SamplerKind, seed: u64) -> Result<Self> {
        if points.shape().len() < 2 {
            return Err(Error::invalid("reference points need a batch axis"));
        }
        let k = points.rows();
        let d = points.row_len();
        let points = points.reshape(vec![k, d])?;
        if let Some(v) = points.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("reference value {v} outside [0,1]")));
        }
        Ok(ReferenceSet {
            points,
            kind,
            seed,
            sources: Vec::new(),
            pgd: None,
        })
    }

    pub fn from_dataset(data: &DatasetSplit) -> Result<Self> {
        let mut set = ReferenceSet::from_points(data.inputs.clone(), SamplerKind::Explicit, 0)?;
        set.sources = vec![data.distribution; data.len()];
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.row_len()
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f32] {
        self.points.row(k)
    }

    /// Content hash over the serialized form; fingerprints built on
    /// different sets never compare.
    pub fn hash(&self) -> u64 {
        fnv1a(&self.encode())
    }

    /// `MGRS` layout: magic, version `u16`, `K u32`, `D u32`, sampler kind
    /// `u8`, seed `u64`, `K·D` little-endian `f32`, CRC32.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u16(VERSION);
        w.u32(self.len() as u32);
        w.u32(self.dim() as u32);
        w.u8(self.kind as u8);
        w.u64(self.seed);
        w.f32s(self.points.data());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(KIND, MAGIC, bytes)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format(
                KIND,
                format!("unsupported version {version}"),
            ));
        }
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let code = r.u8()?;
        let kind = SamplerKind::from_u8(code)
            .ok_or_else(|| Error::format(KIND, format!("unknown sampler {code}")))?;
        let seed = r.u64()?;
        let data = r.f32s(k * d)?;
        r.finish()?;
        let points =
            Tensor::new(vec![k, d], data).map_err(|e| Error::format(KIND, e.to_string()))?;
        ReferenceSet::from_points(points, kind, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn check_pool(datasets: &[&DatasetSplit], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("reference set size K must be at least 1"));
    }
    let usable: Vec<usize> = (0..datasets.len())
        .filter(|&i| !datasets[i].is_empty())
        .collect();
    let first = usable
        .first()
        .ok_or_else(|| Error::invalid("no non-empty dataset to sample from"))?;
    let shape = datasets[*first].input_shape();
    if let Some(&bad) = usable.iter().find(|&&i| datasets[i].input_shape() != shape) {
        return Err(Error::ShapeMismatch {
            expected: shape.to_vec(),
            got: datasets[bad].input_shape().to_vec(),
        });
    }
    Ok(usable)
}

/// Two-stage draw: a dataset uniformly, then a point uniformly within it.
fn draw<'a>(datasets: &[&'a DatasetSplit], usable: &[usize], rng: &mut Rng) -> (&'a [f32], u32) {
    let d = datasets[usable[rng.below(usable.len())]];
    (d.point(rng.below(d.len())), d.distribution)
}

pub fn sample_random(datasets: &[&DatasetSplit], k: usize, seed: u64) -> Result<ReferenceSet> {
    let usable = check_pool(datasets, k)?;
    let mut rng = Rng::derived(seed, RANDOM_STREAM);
    let mut rows = Vec::with_capacity(k);
    let mut sources = Vec::with_capacity(k);
    for _ in 0..k {
        let (p, src) = draw(datasets, &usable, &mut rng);
        rows.push(p);
        sources.push(src);
    }
    let d = datasets[usable[0]].input_dim();
    let mut set =
        ReferenceSet::from_points(Tensor::stack(&[d], &rows)?, SamplerKind::Random, seed)?;
    set.sources = sources;
    Ok(set)
}

/// Box area ratio range for CutMix patches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutMixConfig {
    pub min_area: f32,
    pub max_area: f32,
}

impl Default for CutMixConfig {
    fn default() -> Self {
        CutMixConfig {
            min_area: 0.25,
            max_area: 0.75,
        }
    }
}

/// `m⊙x + (1−m)⊙x*` for a spatial `[H, W, C]` layout, where `mask` holds one
/// 0/1 entry per `H×W` location shared by all channels.
pub fn mix_with_mask(x: &[f32], x_star: &[f32], mask: &[f32], shape: &[usize]) -> Result<Vec<f32>> {
    if shape.len() != 3 {
        return Err(Error::invalid(format!(
            "patch mixing needs [H, W, C] inputs, got {shape:?}"
        )));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    if x.len() != h * w * c || x_star.len() != x.len() || mask.len() != h * w {
        return Err(Error::ShapeMismatch {
            expected: vec![h * w * c, h * w],
            got: vec![x.len(), mask.len()],
        });
    }
    Ok((0..x.len())
        .map(|i| {
            let m = mask[i / c];
            m * x[i] + (1.0 - m) * x_star[i]
        })
        .collect())
}

/// Mask that is 1 everywhere except a `cut_h×cut_w` box at `(top, left)`.
pub fn box_mask(
    h: usize,
    w: usize,
    top: usize,
    left: usize,
    cut_h: usize,
    cut_w: usize,
) -> Vec<f32> {
    let mut mask = vec![1.0f32; h * w];
    for r in top..(top + cut_h).min(h) {
        for c in left..(left + cut_w).min(w) {
            mask[r * w + c] = 0.0;
        }
    }
    mask
}

pub fn sample_cutmix(
    datasets: &[&DatasetSplit],
    k: usize,
    seed: u64,
    patch: &CutMixConfig,
) -> Result<ReferenceSet> {
    let usable = check_pool(datasets, k)?;
    let shape = datasets[usable[0]].input_shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::invalid(format!(
            "CutMix needs spatial [H, W, C] inputs, got {shape:?}"
        )));
    }
    if !(0.0 <= patch.min_area && patch.min_area <= patch.max_area && patch.max_area <= 1.0) {
        return Err(Error::invalid(
            "CutMix area range must satisfy 0 <= min <= max <= 1",
        ));
    }
    let (h, w) = (shape[0], shape[1]);
    let mut rng = Rng::derived(seed, CUTMIX_STREAM);
    let mut data = Vec::with_capacity(k * datasets[usable[0]].input_dim());
    let mut sources = Vec::with_capacity(k);
    for _ in 0..k {
        let (x, src) = draw(datasets, &usable, &mut rng);
        let (x_star, _) = draw(datasets, &usable, &mut rng);
        let ratio = rng.uniform(patch.min_area, patch.max_area).sqrt();
        let cut_h = ((h as f32 * ratio).round() as usize).clamp(1, h);
        let cut_w = ((w as f32 * ratio).round() as usize).clamp(1, w);
        let top = rng.below(h - cut_h + 1);
        let left = rng.below(w - cut_w + 1);
        let mask = box_mask(h, w, top, left, cut_h, cut_w);
        data.extend(mix_with_mask(x, x_star, &mask, &shape)?);
        sources.push(src);
    }
    let d = data.len() / k;
    let mut set =
        ReferenceSet::from_points(Tensor::new(vec![k, d], data)?, SamplerKind::CutMix, seed)?;
    set.sources = sources;
    Ok(set)
}

/// PGD ascent of the probe's scalarized output from random starting points.
/// The probe should not be one of the models being compared.
pub fn sample_pgd(
    datasets: &[&DatasetSplit],
    k: usize,
    probe: &DiffModel,
    pgd: &PgdConfig,
    seed: u64,
) -> Result<ReferenceSet> {
    pgd.validate(false)?;
    let start = sample_random(datasets, k, seed)?;
    if probe.input_dim() != start.dim() {
        return Err(Error::ShapeMismatch {
            expected: probe.input_shape().to_vec(),
            got: vec![start.dim()],
        });
    }
    let origin = start.points.clone();
    let mut points = origin.clone();
    for _ in 0..pgd.steps {
        let grads = probe.input_gradient_batch(&points)?;
        pgd_step(points.data_mut(), grads.data(), origin.data(), pgd);
    }
    let mut set = ReferenceSet::from_points(points, SamplerKind::Pgd, seed)?;
    set.sources = start.sources;
    set.pgd = Some(*pgd);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use crate::model::{Layer, Targets};

    fn dataset(points: &[[f32; 2]], distribution: u32) -> DatasetSplit {
        let data = points.iter().flatten().copied().collect();
        DatasetSplit::new(
            Tensor::new(vec![points.len(), 2], data).unwrap(),
            Targets::Classes {
                classes: 2,
                labels: vec![0; points.len()],
            },
            SplitTag::Train,
            distribution,
            (0..points.len() as u64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_repeats() {
        let d = dataset(&[[0.3, 0.7]], 0);
        let set = sample_random(&[&d], 3, 1).unwrap();
        assert_eq!(set.points().data(), &[0.3, 0.7, 0.3, 0.7, 0.3, 0.7]);
        assert!(sample_random(&[&d], 0, 1).is_err());
        assert!(sample_random(&[], 3, 1).is_err());
    }

    #[test]
    fn seeds_control_the_draw() {
        let pts: Vec<[f32; 2]> = (0..100).map(|i| [i as f32 / 100.0, 0.5]).collect();
        let d = dataset(&pts, 0);
        let a = sample_random(&[&d], 20, 1).unwrap();
        assert_eq!(a, sample_random(&[&d], 20, 1).unwrap());
        assert_ne!(a.points(), sample_random(&[&d], 20, 2).unwrap().points());
    }

    #[test]
    fn dataset_choice_is_fair() {
        let a = dataset(&[[0.0, 0.0]; 5], 1);
        let b = dataset(&[[1.0, 1.0]; 50], 2);
        let set = sample_random(&[&a, &b], 10_000, 9).unwrap();
        let from_a = set.sources.iter().filter(|&&s| s == 1).count() as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&from_a), "{from_a}");
    }

    #[test]
    fn cutmix_rejects_flat_inputs() {
        let d = dataset(&[[0.1, 0.2]], 0);
        assert!(sample_cutmix(&[&d], 2, 1, &CutMixConfig::default()).is_err());
    }

    #[test]
    fn linear_probe_single_step() {
        let probe = DiffModel::new(
            vec![2],
            vec![Layer::dense(
                Tensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap(),
                Tensor::zeros(vec![1]),
            )],
        )
        .unwrap();
        let d = dataset(&[[0.5, 0.5]], 0);
        let pgd = PgdConfig {
            steps: 1,
            alpha: 0.1,
            eps: 0.3,
        };
        let set = sample_pgd(&[&d], 1, &probe, &pgd, 4).unwrap();
        assert_eq!(set.points().data(), &[0.6, 0.4]);
    }

    #[test]
    fn mgrs_round_trip() {
        let pts: Vec<[f32; 2]> = (0..10).map(|i| [i as f32 / 10.0, 0.25]).collect();
        let d = dataset(&pts, 0);
        let set = sample_random(&[&d], 4, 3).unwrap();
        let bytes = set.encode();
        let back = ReferenceSet::decode(&bytes).unwrap();
        assert_eq!(back.points(), set.points());
        assert_eq!((back.kind, back.seed), (set.kind, set.seed));
        assert_eq!(back.encode(), bytes);
        assert_eq!(bytes.len(), 4 + 2 + 4 + 4 + 1 + 8 + 4 * 2 * 4 + 4);
    }
}

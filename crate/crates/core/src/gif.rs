//! Gradient fields and the curves that summarize them.
//!
//! A model's gradient field assigns `∇ₓM(x)` to every input. Its curve
//! between a baseline `x₀` and a reference point `x₁` is the running
//! integral of the field along the segment,
//!
//! ```text
//! g(t) = ∫₀ᵗ F(x₀ + α(x₁ − x₀)) dα,   t ∈ [0, 1],
//! ```
//!
//! discretized with the cumulative midpoint rule on `S` equal steps:
//! `g(t_s) = (1/S) Σ_{j≤s} F(x₀ + ((j − ½)/S)(x₁ − x₀))`, `t_s = s/S`. Sums are
//! carried in `f64` and stored as `f32`. A fingerprint is the set of curves
//! of one model over a shared [`ReferenceSet`].

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::DiffModel;
use crate::rng::{fnv1a, Rng};
use crate::sampler::ReferenceSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MGIF";
pub const VERSION: u16 = 1;
const KIND: &str = "fingerprint";
pub const DEFAULT_STEPS: usize = 64;

/// Anything with a scalar output and an input gradient over flat `[B, D]`
/// batches.
pub trait GradientField: Sync {
    fn dim(&self) -> usize;

    /// Scalarized outputs, one per row.
    fn values(&self, xs: &Tensor) -> Result<Vec<f32>>;

    /// Row-wise gradients, `[B, D]`.
    fn gradients(&self, xs: &Tensor) -> Result<Tensor>;

    fn scalarization(&self) -> Scalarization {
        Scalarization::Raw
    }
}

/// How a model's head output becomes the scalar whose gradient is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scalarization {
    /// A one-output head, used as is.
    Raw,
    /// l2 norm of the pre-softmax logits.
    LogitNorm,
}

impl GradientField for DiffModel {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn values(&self, xs: &Tensor) -> Result<Vec<f32>> {
        self.evaluate_batch(xs)
    }

    fn gradients(&self, xs: &Tensor) -> Result<Tensor> {
        self.input_gradient_batch(xs)
    }

    fn scalarization(&self) -> Scalarization {
        if self.output_dim() == 1 {
            Scalarization::Raw
        } else {
            Scalarization::LogitNorm
        }
    }
}

/// Closed-form fields for checks and demonstrations.
pub mod analytic {
    use super::*;

    /// `M(x) = w·x + b`; the field is `w` everywhere.
    #[derive(Clone, Debug)]
    pub struct Linear {
        pub weights: Vec<f32>,
        pub bias: f32,
    }

    impl GradientField for Linear {
        fn dim(&self) -> usize {
            self.weights.len()
        }

        fn values(&self, xs: &Tensor) -> Result<Vec<f32>> {
            check_rows(xs, self.dim())?;
            Ok((0..xs.rows())
                .map(|r| {
                    xs.row(r)
                        .iter()
                        .zip(&self.weights)
                        .map(|(a, b)| a * b)
                        .sum::<f32>()
                        + self.bias
                })
                .collect())
        }

        fn gradients(&self, xs: &Tensor) -> Result<Tensor> {
            check_rows(xs, self.dim())?;
            let data = (0..xs.rows())
                .flat_map(|_| self.weights.iter().copied())
                .collect();
            Tensor::new(vec![xs.rows(), self.dim()], data)
        }
    }

    /// `M(x) = ½‖x‖²`; the field is `x`.
    #[derive(Clone, Debug)]
    pub struct HalfSquaredNorm {
        pub dim: usize,
    }

    impl GradientField for HalfSquaredNorm {
        fn dim(&self) -> usize {
            self.dim
        }

        fn values(&self, xs: &Tensor) -> Result<Vec<f32>> {
            check_rows(xs, self.dim)?;
            Ok((0..xs.rows())
                .map(|r| 0.5 * xs.row(r).iter().map(|v| v * v).sum::<f32>())
                .collect())
        }

        fn gradients(&self, xs: &Tensor) -> Result<Tensor> {
            check_rows(xs, self.dim)?;
            xs.clone().reshape(vec![xs.rows(), self.dim])
        }
    }

    fn check_rows(xs: &Tensor, dim: usize) -> Result<()> {
        if xs.shape().len() < 2 || xs.row_len() != dim {
            return Err(Error::ShapeMismatch {
                expected: vec![xs.shape().first().copied().unwrap_or(1), dim],
                got: xs.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// `F(x)` at a single flat point.
pub fn field_at(field: &dyn GradientField, x: &[f32]) -> Result<Tensor> {
    let xs = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let g = field.gradients(&xs)?;
    g.reshape(vec![x.len()])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Quadrature {
    Midpoint = 0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Baseline {
    Zero,
    /// Independent uniform `[0,1]^D` baseline per curve, seeded.
    Random(u64),
}

impl Baseline {
    fn code(self) -> u8 {
        match self {
            Baseline::Zero => 0,
            Baseline::Random(_) => 1,
        }
    }

    /// Baseline of curve `k`.
    pub fn point(self, k: usize, dim: usize) -> Vec<f32> {
        match self {
            Baseline::Zero => vec![0.0; dim],
            Baseline::Random(seed) => {
                let mut rng = Rng::derived(seed, 0xba5e_0000 + k as u64);
                (0..dim).map(|_| rng.uniform(0.0, 1.0)).collect()
            }
        }
    }
}

/// One curve: rows `s = 1..=S` hold `g(t_s)`; `g(t_0) = 0` is implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct GiFCurve {
    pub samples: Vec<f32>,
    pub baseline: Vec<f32>,
    pub endpoint: Vec<f32>,
    pub steps: usize,
    pub rule: Quadrature,
}

impl GiFCurve {
    pub fn dim(&self) -> usize {
        self.endpoint.len()
    }

    /// `g(t_s)` for `s` in `1..=S`.
    pub fn at(&self, s: usize) -> &[f32] {
        let d = self.dim();
        &self.samples[(s - 1) * d..s * d]
    }

    /// `g(1)`.
    pub fn end(&self) -> &[f32] {
        self.at(self.steps)
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 2 {
        return Err(Error::invalid(format!(
            "curves need at least 2 steps, got {steps}"
        )));
    }
    Ok(())
}

/// Cumulative midpoint quadrature of the field along `x0 → x1`.
pub fn extract_curve(
    field: &dyn GradientField,
    x0: &[f32],
    x1: &[f32],
    steps: usize,
) -> Result<GiFCurve> {
    check_steps(steps)?;
    let d = field.dim();
    if x0.len() != d || x1.len() != d {
        return Err(Error::ShapeMismatch {
            expected: vec![d],
            got: vec![x0.len(), x1.len()],
        });
    }
    Ok(GiFCurve {
        samples: curve_samples(field, x0, x1, steps)?,
        baseline: x0.to_vec(),
        endpoint: x1.to_vec(),
        steps,
        rule: Quadrature::Midpoint,
    })
}

fn curve_samples(
    field: &dyn GradientField,
    x0: &[f32],
    x1: &[f32],
    steps: usize,
) -> Result<Vec<f32>> {
    let d = x0.len();
    let mut path = Vec::with_capacity(steps * d);
    for j in 1..=steps {
        let alpha = (j as f64 - 0.5) / steps as f64;
        path.extend(
            x0.iter()
                .zip(x1)
                .map(|(&a, &b)| (f64::from(a) + alpha * (f64::from(b) - f64::from(a))) as f32),
        );
    }
    let grads = field.gradients(&Tensor::new(vec![steps, d], path)?)?;
    let inv = 1.0 / steps as f64;
    let mut acc = vec![0.0f64; d];
    let mut out = Vec::with_capacity(steps * d);
    for s in 0..steps {
        for (a, &g) in acc.iter_mut().zip(grads.row(s)) {
            *a += f64::from(g) * inv;
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve has non-finite samples"));
    }
    Ok(out)
}

/// `|Σᵢ (x₁ᵢ − x₀ᵢ)·gᵢ(1) − (M(x₁) − M(x₀))|`.
pub fn completeness_residual(field: &dyn GradientField, curve: &GiFCurve) -> Result<f64> {
    let d = curve.dim();
    let mut ends = curve.baseline.clone();
    ends.extend_from_slice(&curve.endpoint);
    let v = field.values(&Tensor::new(vec![2, d], ends)?)?;
    let attributed: f64 = curve
        .endpoint
        .iter()
        .zip(&curve.baseline)
        .zip(curve.end())
        .map(|((&x1, &x0), &g)| (f64::from(x1) - f64::from(x0)) * f64::from(g))
        .sum();
    Ok((attributed - (f64::from(v[1]) - f64::from(v[0]))).abs())
}

/// A model's fingerprint: `K` curves of `S` samples in `D` dimensions,
/// stored as one contiguous `K×S×D` block in reference-point order.
#[derive(Clone, Debug, PartialEq)]
pub struct GiFCurveSet {
    pub model_id: String,
    pub model_hash: u64,
    /// Hash of what the curves are anchored to: the reference set, combined
    /// with the baseline seed when baselines are random.
    pub anchor_hash: u64,
    pub baseline: Baseline,
    pub curves: usize,
    pub steps: usize,
    pub dim: usize,
    pub rule: Quadrature,
    /// Not persisted; `None` for decoded sets.
    pub scalarization: Option<Scalarization>,
    pub data: Vec<f32>,
}

pub fn anchor_hash(refset: &ReferenceSet, baseline: Baseline) -> u64 {
    let r = refset.hash();
    match baseline {
        Baseline::Zero => r,
        Baseline::Random(seed) => {
            let mut bytes = r.to_le_bytes().to_vec();
            bytes.extend_from_slice(&seed.to_le_bytes());
            fnv1a(&bytes)
        }
    }
}

/// One curve per reference point, computed in parallel on the current rayon
/// pool and assembled in reference order.
pub fn fingerprint(
    field: &dyn GradientField,
    model_id: &str,
    refset: &ReferenceSet,
    baseline: Baseline,
    steps: usize,
) -> Result<GiFCurveSet> {
    check_steps(steps)?;
    if refset.is_empty() {
        return Err(Error::invalid("reference set is empty"));
    }
    let d = field.dim();
    if refset.dim() != d {
        return Err(Error::ShapeMismatch {
            expected: vec![d],
            got: vec![refset.dim()],
        });
    }
    let blocks: Vec<Vec<f32>> = (0..refset.len())
        .into_par_iter()
        .map(|k| curve_samples(field, &baseline.point(k, d), refset.point(k), steps))
        .collect::<Result<_>>()?;
    Ok(GiFCurveSet {
        model_id: model_id.to_string(),
        model_hash: fnv1a(model_id.as_bytes()),
        anchor_hash: anchor_hash(refset, baseline),
        baseline,
        curves: refset.len(),
        steps,
        dim: d,
        rule: Quadrature::Midpoint,
        scalarization: Some(field.scalarization()),
        data: blocks.concat(),
    })
}

impl GiFCurveSet {
    /// The `K·S·D` samples of curve `k`, row `s-1` holding `g(t_s)`.
    pub fn curve(&self, k: usize) -> &[f32] {
        let w = self.steps * self.dim;
        &self.data[k * w..(k + 1) * w]
    }

    /// Owned copy of curve `k` with its anchors.
    pub fn curve_owned(&self, k: usize, refset: &ReferenceSet) -> GiFCurve {
        GiFCurve {
            samples: self.curve(k).to_vec(),
            baseline: self.baseline.point(k, self.dim),
            endpoint: refset.point(k).to_vec(),
            steps: self.steps,
            rule: self.rule,
        }
    }

    /// Why two fingerprints cannot be compared, if they cannot.
    pub fn incompatibility(&self, other: &GiFCurveSet) -> Option<String> {
        if self.anchor_hash != other.anchor_hash {
            return Some(format!(
                "reference anchors differ ({:016x} vs {:016x})",
                self.anchor_hash, other.anchor_hash
            ));
        }
        if self.baseline.code() != other.baseline.code() {
            return Some("baseline modes differ".into());
        }
        if (self.curves, self.steps, self.dim) != (other.curves, other.steps, other.dim) {
            return Some(format!(
                "shapes differ (K,S,D) = {:?} vs {:?}",
                (self.curves, self.steps, self.dim),
                (other.curves, other.steps, other.dim)
            ));
        }
        if self.rule != other.rule {
            return Some("quadrature rules differ".into());
        }
        None
    }

    /// `MGIF` layout: magic, version `u16`, model id hash `u64`, anchor hash
    /// `u64`, baseline mode `u8`, `K u32`, `S u32`, `D u32`, quadrature tag
    /// `u8`, `K·S·D` little-endian `f32`, CRC32.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u16(VERSION);
        w.u64(self.model_hash);
        w.u64(self.anchor_hash);
        w.u8(self.baseline.code());
        w.u32(self.curves as u32);
        w.u32(self.steps as u32);
        w.u32(self.dim as u32);
        w.u8(self.rule as u8);
        w.f32s(&self.data);
        w.finish()
    }

    /// Decodes a fingerprint; the model id string is not stored in the file,
    /// so the caller supplies it (its hash must match the header). A random
    /// baseline decodes with seed 0; comparability rests on the anchor hash.
    pub fn decode(bytes: &[u8], model_id: &str) -> Result<Self> {
        let mut r = Reader::open(KIND, MAGIC, bytes)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format(
                KIND,
                format!("unsupported version {version}"),
            ));
        }
        let model_hash = r.u64()?;
        if model_hash != fnv1a(model_id.as_bytes()) {
            return Err(Error::format(
                KIND,
                format!("model id hash does not match `{model_id}`"),
            ));
        }
        let anchor_hash = r.u64()?;
        let baseline = match r.u8()? {
            0 => Baseline::Zero,
            1 => Baseline::Random(0),
            other => {
                return Err(Error::format(
                    KIND,
                    format!("unknown baseline mode {other}"),
                ))
            }
        };
        let curves = r.u32()? as usize;
        let steps = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let rule = match r.u8()? {
            0 => Quadrature::Midpoint,
            other => {
                return Err(Error::format(
                    KIND,
                    format!("unknown quadrature tag {other}"),
                ))
            }
        };
        let data = r.f32s(curves * steps * dim)?;
        r.finish()?;
        Ok(GiFCurveSet {
            model_id: model_id.to_string(),
            model_hash,
            anchor_hash,
            baseline,
            curves,
            steps,
            dim,
            rule,
            scalarization: None,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path, model_id: &str) -> Result<Self> {
        Self::decode(&fs::read(path)?, model_id)
    }
}

/// Fixed header size of an `MGIF` file (everything except payload and CRC).
pub const HEADER_BYTES: usize = 4 + 2 + 8 + 8 + 1 + 4 + 4 + 4 + 1;

//! Differentiable sequential models and the scalarized output they expose.
//!
//! A [`DiffModel`] maps a batch of inputs to logits. The scalar value whose
//! input gradient forms the model's gradient field is the logits themselves
//! for a one-output head, and their l2 norm otherwise. Scalarization always
//! reads the raw (pre-softmax) head.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LayerKind {
    Dense = 1,
    Conv2d = 2,
    Relu = 3,
    Tanh = 4,
    MaxPool2 = 5,
    Flatten = 6,
}

impl LayerKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => LayerKind::Dense,
            2 => LayerKind::Conv2d,
            3 => LayerKind::Relu,
            4 => LayerKind::Tanh,
            5 => LayerKind::MaxPool2,
            6 => LayerKind::Flatten,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `weight: [in, out]`, `bias: [out]`.
    Dense {
        weight: Tensor,
        bias: Tensor,
    },
    /// `weight: [k, k, in_ch, out_ch]`, `bias: [out_ch]`.
    Conv2d {
        weight: Tensor,
        bias: Tensor,
    },
    Relu,
    Tanh,
    MaxPool2,
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::Relu => LayerKind::Relu,
            Layer::Tanh => LayerKind::Tanh,
            Layer::MaxPool2 => LayerKind::MaxPool2,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    pub fn dense(weight: Tensor, bias: Tensor) -> Self {
        Layer::Dense { weight, bias }
    }

    fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    /// Output feature shape for a given input feature shape (batch excluded).
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad =
            |what: &str| Error::invalid(format!("{what} cannot follow feature shape {input:?}"));
        match self {
            Layer::Dense { weight, bias } => {
                let s = weight.shape();
                if input.len() != 1 || s.len() != 2 || s[0] != input[0] || bias.shape() != [s[1]] {
                    return Err(bad("dense layer"));
                }
                Ok(vec![s[1]])
            }
            Layer::Conv2d { weight, bias } => {
                let s = weight.shape();
                if input.len() != 3
                    || s.len() != 4
                    || s[0] != s[1]
                    || s[0] % 2 == 0
                    || s[2] != input[2]
                    || bias.shape() != [s[3]]
                {
                    return Err(bad("conv2d layer"));
                }
                Ok(vec![input[0], input[1], s[3]])
            }
            Layer::Relu | Layer::Tanh => Ok(input.to_vec()),
            Layer::MaxPool2 => {
                if input.len() != 3 || input[0] < 2 || input[1] < 2 {
                    return Err(bad("max-pool"));
                }
                Ok(vec![input[0] / 2, input[1] / 2, input[2]])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// Training targets for a batch or a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Hard class ids; trained with softmax cross-entropy.
    Classes { classes: usize, labels: Vec<usize> },
    /// Probability rows (`n * classes`); trained with cross-entropy against
    /// soft targets.
    Soft { classes: usize, probs: Vec<f32> },
    /// Regression targets for a one-output head; trained with squared error.
    Values(Vec<f32>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Soft { classes, probs } => probs.len() / classes,
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes { classes, labels } => Targets::Classes {
                classes: *classes,
                labels: idx.iter().map(|&i| labels[i]).collect(),
            },
            Targets::Soft { classes, probs } => Targets::Soft {
                classes: *classes,
                probs: idx
                    .iter()
                    .flat_map(|&i| probs[i * classes..(i + 1) * classes].iter().copied())
                    .collect(),
            },
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Gradients aligned with [`DiffModel::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads(pub Vec<Tensor>);

impl ParamGrads {
    pub fn tensors(&self) -> &[Tensor] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffModel {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    output_dim: usize,
}

impl DiffModel {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid(format!("bad input shape {input_shape:?}")));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape.len() != 1 {
            return Err(Error::invalid(format!(
                "model head must be a vector, got feature shape {shape:?}"
            )));
        }
        Ok(DiffModel {
            input_shape,
            layers,
            output_dim: shape[0],
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Index (into [`Self::parameters`]) of the first parameter that belongs
    /// to the final affine layer.
    pub fn last_layer_param_start(&self) -> usize {
        let total = self.parameters().len();
        match self.layers.iter().rev().find(|l| !l.params().is_empty()) {
            Some(l) => total - l.params().len(),
            None => total,
        }
    }

    /// Validates a batch and returns it reshaped to `[B, input_shape...]`.
    /// Rows may be given flat (`[B, D]`) or with the full input shape.
    fn batch(&self, xs: &Tensor) -> Result<Tensor> {
        let ok = xs.shape().len() >= 2 && xs.row_len() == self.input_dim();
        let ok = ok && (xs.shape()[1..] == self.input_shape[..] || xs.shape().len() == 2);
        if !ok {
            let mut expected = vec![xs.shape().first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::ShapeMismatch {
                expected,
                got: xs.shape().to_vec(),
            });
        }
        let mut shape = vec![xs.rows()];
        shape.extend_from_slice(&self.input_shape);
        xs.clone().reshape(shape)
    }

    /// A single input, given with the model's input shape or flat.
    fn single(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.input_shape.as_slice() && x.shape() != [self.input_dim()] {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                got: x.shape().to_vec(),
            });
        }
        let mut shape = vec![1];
        shape.extend_from_slice(&self.input_shape);
        x.clone().reshape(shape)
    }

    /// Records the forward pass on `tape`; returns the logits `[B, out]` and
    /// the parameter leaves in [`Self::parameters`] order.
    pub(crate) fn record(
        &self,
        tape: &mut Tape,
        input: Var,
        params_require_grad: bool,
    ) -> Result<(Var, Vec<Var>)> {
        let mut h = input;
        let mut leaves = Vec::new();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense { weight, bias } => {
                    let w = tape.leaf(weight.clone(), params_require_grad);
                    let b = tape.leaf(bias.clone(), params_require_grad);
                    leaves.extend([w, b]);
                    let z = tape.matmul(h, w)?;
                    tape.add_bias(z, b)?
                }
                Layer::Conv2d { weight, bias } => {
                    let w = tape.leaf(weight.clone(), params_require_grad);
                    let b = tape.leaf(bias.clone(), params_require_grad);
                    leaves.extend([w, b]);
                    let z = tape.conv2d(h, w)?;
                    tape.add_bias(z, b)?
                }
                Layer::Relu => tape.relu(h),
                Layer::Tanh => tape.tanh(h),
                Layer::MaxPool2 => tape.max_pool2(h)?,
                Layer::Flatten => {
                    let v = tape.value(h);
                    let shape = vec![v.rows(), v.row_len()];
                    tape.reshape(h, shape)?
                }
            };
        }
        Ok((h, leaves))
    }

    /// Raw head output for a batch, `[B, output_dim]`.
    pub fn logits(&self, xs: &Tensor) -> Result<Tensor> {
        let xs = self.batch(xs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(xs, false);
        let (out, _) = self.record(&mut tape, x, false)?;
        Ok(tape.value(out).clone())
    }

    /// Softmax probabilities for a batch, `[B, output_dim]`.
    pub fn probabilities(&self, xs: &Tensor) -> Result<Tensor> {
        let mut z = self.logits(xs)?;
        let c = z.row_len();
        for row in z.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(z)
    }

    /// Arg-max class per row; ties resolve to the lowest index.
    pub fn predict(&self, xs: &Tensor) -> Result<Vec<usize>> {
        let z = self.logits(xs)?;
        Ok((0..z.rows()).map(|r| argmax(z.row(r))).collect())
    }

    /// Scalarized output `M(x)` for a single input.
    pub fn evaluate_scalar(&self, x: &Tensor) -> Result<f32> {
        let x = self.single(x)?;
        Ok(self.evaluate_batch(&x)?[0])
    }

    /// Scalarized outputs for a batch.
    pub fn evaluate_batch(&self, xs: &Tensor) -> Result<Vec<f32>> {
        let xs = self.batch(xs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(xs, false);
        let (out, _) = self.record(&mut tape, x, false)?;
        let s = tape.row_norm(out)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// `∇ₓM(x)` for a single input; the result has the shape of `x`.
    pub fn input_gradient(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.input_gradient_batch(&self.single(x)?)?;
        g.reshape(x.shape().to_vec())
    }

    /// Row-wise `∇ₓM` for a batch; rows are independent, so this is the
    /// gradient of the batch sum. The result has the shape of `xs`.
    pub fn input_gradient_batch(&self, xs: &Tensor) -> Result<Tensor> {
        let shaped = self.batch(xs)?;
        let b = shaped.rows();
        let mut tape = Tape::new();
        let x = tape.leaf(shaped, true);
        let (out, _) = self.record(&mut tape, x, false)?;
        let s = tape.row_norm(out)?;
        let mut grads = tape.backward(s, Tensor::full(vec![b], 1.0))?;
        let g = grads
            .take(x)
            .unwrap_or_else(|| Tensor::zeros(tape.value(x).shape().to_vec()));
        g.reshape(xs.shape().to_vec())
    }

    /// Gradient of the training loss with respect to the batch inputs.
    pub fn loss_input_gradient(&self, xs: &Tensor, targets: &Targets) -> Result<(f32, Tensor)> {
        let shaped = self.batch(xs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(shaped, true);
        let (out, _) = self.record(&mut tape, x, false)?;
        let loss = self.loss_node(&mut tape, out, targets)?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss, Tensor::from_vec(vec![1.0]))?;
        let g = grads
            .take(x)
            .unwrap_or_else(|| Tensor::zeros(tape.value(x).shape().to_vec()));
        Ok((value, g.reshape(xs.shape().to_vec())?))
    }

    fn loss_node(&self, tape: &mut Tape, out: Var, targets: &Targets) -> Result<Var> {
        let b = tape.value(out).rows();
        if targets.len() != b {
            return Err(Error::ShapeMismatch {
                expected: vec![b],
                got: vec![targets.len()],
            });
        }
        match targets {
            Targets::Classes { classes, labels } => {
                if *classes != self.output_dim {
                    return Err(Error::invalid("class count does not match model head"));
                }
                let mut t = vec![0.0f32; b * classes];
                for (r, &l) in labels.iter().enumerate() {
                    if l >= *classes {
                        return Err(Error::invalid(format!("label {l} out of range")));
                    }
                    t[r * classes + l] = 1.0;
                }
                tape.softmax_xent(out, t)
            }
            Targets::Soft { classes, probs } => {
                if *classes != self.output_dim {
                    return Err(Error::invalid("class count does not match model head"));
                }
                tape.softmax_xent(out, probs.clone())
            }
            Targets::Values(v) => {
                if self.output_dim != 1 {
                    return Err(Error::invalid("regression targets need a one-output head"));
                }
                tape.squared_error(out, v.clone())
            }
        }
    }

    /// Training loss on a batch and its gradient for every parameter.
    pub fn parameter_gradient(&self, xs: &Tensor, targets: &Targets) -> Result<(f32, ParamGrads)> {
        let shaped = self.batch(xs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(shaped, false);
        let (out, leaves) = self.record(&mut tape, x, true)?;
        let loss = self.loss_node(&mut tape, out, targets)?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss, Tensor::from_vec(vec![1.0]))?;
        let tensors = leaves
            .iter()
            .map(|&v| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape().to_vec()))
            })
            .collect();
        Ok((value, ParamGrads(tensors)))
    }

    /// Training loss on a batch, without gradients.
    pub fn loss(&self, xs: &Tensor, targets: &Targets) -> Result<f32> {
        let shaped = self.batch(xs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(shaped, false);
        let (out, _) = self.record(&mut tape, x, false)?;
        let loss = self.loss_node(&mut tape, out, targets)?;
        Ok(tape.value(loss).data()[0])
    }

    /// `θ' = θ − lr·g` as a new model.
    pub fn sgd_step(&self, grads: &ParamGrads, lr: f32) -> Result<DiffModel> {
        if !(lr >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be non-negative, got {lr}"
            )));
        }
        self.apply_update(grads, -lr, 0)
    }

    /// `θ' = θ + scale·g` restricted to parameters at index `from` onward.
    pub(crate) fn apply_update(
        &self,
        grads: &ParamGrads,
        scale: f32,
        from: usize,
    ) -> Result<DiffModel> {
        let mut next = self.clone();
        let params = next.parameters_mut();
        if params.len() != grads.0.len() {
            return Err(Error::invalid(format!(
                "{} gradients for {} parameters",
                grads.0.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.into_iter().zip(&grads.0).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if i < from || scale == 0.0 {
                continue;
            }
            for (v, &d) in p.data_mut().iter_mut().zip(g.data()) {
                *v += scale * d;
            }
        }
        Ok(next)
    }

    /// Mutable access to every parameter tensor in [`Self::parameters`] order.
    pub(crate) fn map_parameters(&self, mut f: impl FnMut(usize, &mut Tensor)) -> DiffModel {
        let mut next = self.clone();
        for (i, p) in next.parameters_mut().into_iter().enumerate() {
            f(i, p);
        }
        next
    }

    /// The model whose head is `scale·z + shift` for the original head `z`.
    /// Requires a final dense layer.
    pub fn with_output_affine(&self, scale: f32, shift: f32) -> Result<DiffModel> {
        let mut next = self.clone();
        match next.layers.last_mut() {
            Some(Layer::Dense { weight, bias }) => {
                for v in weight.data_mut() {
                    *v *= scale;
                }
                for v in bias.data_mut() {
                    *v = *v * scale + shift;
                }
                Ok(next)
            }
            _ => Err(Error::invalid(
                "output affine map needs a final dense layer",
            )),
        }
    }

    /// Replaces the final dense layer (e.g. to re-head a trunk for a new task).
    pub fn with_head(&self, weight: Tensor, bias: Tensor) -> Result<DiffModel> {
        let mut layers = self.layers.clone();
        match layers.last_mut() {
            Some(last @ Layer::Dense { .. }) => *last = Layer::Dense { weight, bias },
            _ => return Err(Error::invalid("model has no final dense layer")),
        }
        DiffModel::new(self.input_shape.clone(), layers)
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn layer(self) -> Layer {
        match self {
            Activation::Relu => Layer::Relu,
            Activation::Tanh => Layer::Tanh,
        }
    }
}

/// Architecture recipe; [`ArchSpec::init`] draws fresh parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArchSpec {
    Mlp {
        input_shape: Vec<usize>,
        hidden: Vec<usize>,
        outputs: usize,
        activation: Activation,
    },
    /// Conv blocks (`conv k×k → activation → 2×2 max-pool`), then one hidden
    /// dense layer and the head. Input shape is `[H, W, C]`.
    Cnn {
        input_shape: Vec<usize>,
        channels: Vec<usize>,
        kernel: usize,
        hidden: usize,
        outputs: usize,
        activation: Activation,
    },
}

impl ArchSpec {
    pub fn mlp(
        input_shape: Vec<usize>,
        hidden: Vec<usize>,
        outputs: usize,
        activation: Activation,
    ) -> Self {
        ArchSpec::Mlp {
            input_shape,
            hidden,
            outputs,
            activation,
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        match self {
            ArchSpec::Mlp { input_shape, .. } | ArchSpec::Cnn { input_shape, .. } => input_shape,
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            ArchSpec::Mlp { outputs, .. } | ArchSpec::Cnn { outputs, .. } => *outputs,
        }
    }

    /// Stable text form, used in config hashes.
    pub fn describe(&self) -> String {
        match self {
            ArchSpec::Mlp {
                input_shape,
                hidden,
                outputs,
                activation,
            } => format!("mlp in={input_shape:?} hidden={hidden:?} out={outputs} act={activation:?}"),
            ArchSpec::Cnn {
                input_shape,
                channels,
                kernel,
                hidden,
                outputs,
                activation,
            } => format!(
                "cnn in={input_shape:?} ch={channels:?} k={kernel} hidden={hidden} out={outputs} act={activation:?}"
            ),
        }
    }

    pub fn init(&self, rng: &mut Rng) -> Result<DiffModel> {
        let mut layers = Vec::new();
        match self {
            ArchSpec::Mlp {
                input_shape,
                hidden,
                outputs,
                activation,
            } => {
                if input_shape.len() > 1 {
                    layers.push(Layer::Flatten);
                }
                let mut fan_in: usize = input_shape.iter().product();
                for &h in hidden {
                    layers.push(dense_init(rng, fan_in, h, *activation));
                    layers.push(activation.layer());
                    fan_in = h;
                }
                layers.push(dense_init(rng, fan_in, *outputs, Activation::Tanh));
                DiffModel::new(input_shape.clone(), layers)
            }
            ArchSpec::Cnn {
                input_shape,
                channels,
                kernel,
                hidden,
                outputs,
                activation,
            } => {
                if input_shape.len() != 3 {
                    return Err(Error::invalid("cnn input shape must be [H, W, C]"));
                }
                let (mut h, mut w, mut c) = (input_shape[0], input_shape[1], input_shape[2]);
                for &oc in channels {
                    let fan_in = kernel * kernel * c;
                    let weight = normal_tensor(
                        rng,
                        vec![*kernel, *kernel, c, oc],
                        init_scale(fan_in, *activation),
                    );
                    layers.push(Layer::Conv2d {
                        weight,
                        bias: Tensor::zeros(vec![oc]),
                    });
                    layers.push(activation.layer());
                    layers.push(Layer::MaxPool2);
                    h /= 2;
                    w /= 2;
                    c = oc;
                }
                layers.push(Layer::Flatten);
                let flat = h * w * c;
                layers.push(dense_init(rng, flat, *hidden, *activation));
                layers.push(activation.layer());
                layers.push(dense_init(rng, *hidden, *outputs, Activation::Tanh));
                DiffModel::new(input_shape.clone(), layers)
            }
        }
    }
}

fn init_scale(fan_in: usize, activation: Activation) -> f32 {
    let gain = match activation {
        Activation::Relu => 2.0,
        Activation::Tanh => 1.0,
    };
    (gain / fan_in as f32).sqrt()
}

fn normal_tensor(rng: &mut Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.normal() * scale).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

fn dense_init(rng: &mut Rng, fan_in: usize, fan_out: usize, activation: Activation) -> Layer {
    Layer::Dense {
        weight: normal_tensor(rng, vec![fan_in, fan_out], init_scale(fan_in, activation)),
        bias: Tensor::zeros(vec![fan_out]),
    }
}

//! Reverse-mode differentiation over a linear tape of batched tensor ops.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and the backward sweep is a single reverse pass.
//! A node only receives a gradient when one of its leaves was registered with
//! `requires_grad`, which keeps input-gradient queries from paying for
//! parameter gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    height: usize,
    width: usize,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
}

enum Op {
    Leaf,
    MatMul {
        x: Var,
        w: Var,
    },
    AddBias {
        x: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    Tanh(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    Reshape(Var),
    RowNorm(Var),
    SoftmaxXent {
        logits: Var,
        probs: Vec<f32>,
        targets: Vec<f32>,
    },
    SquaredError {
        pred: Var,
        targets: Vec<f32>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// `[B, n] x [n, m] -> [B, m]`; `x` is viewed row-wise regardless of its
    /// trailing shape.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.row_len() != wv.shape()[0] {
            return Err(Error::ShapeMismatch {
                expected: vec![xv.row_len(), wv.shape().get(1).copied().unwrap_or(0)],
                got: wv.shape().to_vec(),
            });
        }
        let (b, n, m) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
        let (xd, wd) = (xv.data(), wv.data());
        let mut out = vec![0.0f32; b * m];
        for r in 0..b {
            let orow = &mut out[r * m..(r + 1) * m];
            for k in 0..n {
                let xk = xd[r * n + k];
                let wrow = &wd[k * m..(k + 1) * m];
                for (o, &wkj) in orow.iter_mut().zip(wrow) {
                    *o += xk * wkj;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        let value = Tensor::new(vec![b, m], out)?;
        Ok(self.push(Op::MatMul { x, w }, value, rg))
    }

    /// Adds `b` (shape `[m]`) along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let m = bv.len();
        if xv.shape().last() != Some(&m) {
            return Err(Error::ShapeMismatch {
                expected: vec![m],
                got: xv.shape().to_vec(),
            });
        }
        let mut value = xv.clone();
        for chunk in value.data_mut().chunks_mut(m) {
            for (v, &bb) in chunk.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Op::AddBias { x, b }, value, rg))
    }

    /// Stride-1 "same" convolution, `x: [B, H, W, C]`, `w: [k, k, C, O]`
    /// with odd `k`; out-of-range taps read zero.
    pub fn conv2d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[0] != ws[1] || ws[0] % 2 == 0 || ws[2] != xs[3] {
            return Err(Error::ShapeMismatch {
                expected: vec![
                    ws.first().copied().unwrap_or(0),
                    0,
                    xs.get(3).copied().unwrap_or(0),
                    0,
                ],
                got: ws.to_vec(),
            });
        }
        let geom = ConvGeom {
            batch: xs[0],
            height: xs[1],
            width: xs[2],
            in_ch: xs[3],
            out_ch: ws[3],
            kernel: ws[0],
        };
        let out = conv_forward(xv.data(), wv.data(), geom);
        let value = Tensor::new(vec![geom.batch, geom.height, geom.width, geom.out_ch], out)?;
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Op::Conv2d { x, w, geom }, value, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        self.push(Op::Relu(x), value, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f32::tanh);
        let rg = self.rg(x);
        self.push(Op::Tanh(x), value, rg)
    }

    /// 2x2 max pooling with stride 2 over `[B, H, W, C]`; odd trailing
    /// rows/columns are dropped. Ties go to the first element in row-major
    /// window order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 4 || s[1] < 2 || s[2] < 2 {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 2, 2, 0],
                got: s.to_vec(),
            });
        }
        let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        let d = xv.data();
        let mut out = Vec::with_capacity(b * oh * ow * c);
        let mut argmax = Vec::with_capacity(b * oh * ow * c);
        for n in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    for ch in 0..c {
                        let mut best_idx = ((n * h + 2 * i) * w + 2 * j) * c + ch;
                        let mut best = d[best_idx];
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = ((n * h + 2 * i + di) * w + 2 * j + dj) * c + ch;
                            if d[idx] > best {
                                best = d[idx];
                                best_idx = idx;
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx as u32);
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, oh, ow, c], out)?;
        let rg = self.rg(x);
        Ok(self.push(Op::MaxPool2 { x, argmax }, value, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Reshape(x), value, rg))
    }

    /// Per-row l2 norm, `[B, n] -> [B]`. Rows of width 1 pass through
    /// unchanged (a scalar head is its own scalarization).
    pub fn row_norm(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let w = xv.row_len();
        let out: Vec<f32> = if w == 1 {
            xv.data().to_vec()
        } else {
            xv.data()
                .chunks(w)
                .map(|r| r.iter().map(|v| v * v).sum::<f32>().sqrt())
                .collect()
        };
        let value = Tensor::new(vec![xv.rows()], out)?;
        let rg = self.rg(x);
        Ok(self.push(Op::RowNorm(x), value, rg))
    }

    /// Mean softmax cross-entropy of `[B, C]` logits against target
    /// probability rows (one-hot for hard labels).
    pub fn softmax_xent(&mut self, logits: Var, targets: Vec<f32>) -> Result<Var> {
        let lv = self.value(logits);
        if lv.len() != targets.len() || lv.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                expected: lv.shape().to_vec(),
                got: vec![targets.len()],
            });
        }
        let (b, c) = (lv.rows(), lv.row_len());
        let mut probs = vec![0.0f32; b * c];
        let mut loss = 0.0f64;
        for r in 0..b {
            let row = lv.row(r);
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let sum: f32 = row.iter().map(|&z| (z - max).exp()).sum();
            let log_sum = sum.ln();
            for k in 0..c {
                let log_p = row[k] - max - log_sum;
                probs[r * c + k] = log_p.exp();
                let t = targets[r * c + k];
                if t != 0.0 {
                    loss -= f64::from(t * log_p);
                }
            }
        }
        let value = Tensor::from_vec(vec![(loss / b as f64) as f32]);
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SoftmaxXent {
                logits,
                probs,
                targets,
            },
            value,
            rg,
        ))
    }

    /// Mean squared error of `[B, 1]` predictions against `B` targets.
    pub fn squared_error(&mut self, pred: Var, targets: Vec<f32>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![pv.len()],
                got: vec![targets.len()],
            });
        }
        let loss: f64 = pv
            .data()
            .iter()
            .zip(&targets)
            .map(|(&p, &t)| f64::from(p - t).powi(2))
            .sum::<f64>()
            / targets.len() as f64;
        let value = Tensor::from_vec(vec![loss as f32]);
        let rg = self.rg(pred);
        Ok(self.push(Op::SquaredError { pred, targets }, value, rg))
    }

    /// Back-propagates `seed` (same shape as `output`'s value) to every node
    /// that requires a gradient.
    pub fn backward(&self, output: Var, seed: Tensor) -> Result<Grads> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::ShapeMismatch {
                expected: self.value(output).shape().to_vec(),
                got: seed.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Grads(grads))
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { x, w } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (b, n, m) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
                let gd = g.data();
                if self.rg(*x) {
                    let wd = wv.data();
                    let mut dx = vec![0.0f32; b * n];
                    for r in 0..b {
                        let grow = &gd[r * m..(r + 1) * m];
                        for k in 0..n {
                            let wrow = &wd[k * m..(k + 1) * m];
                            dx[r * n + k] = grow.iter().zip(wrow).map(|(a, c)| a * c).sum();
                        }
                    }
                    accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                if self.rg(*w) {
                    let xd = xv.data();
                    let mut dw = vec![0.0f32; n * m];
                    for r in 0..b {
                        let grow = &gd[r * m..(r + 1) * m];
                        for k in 0..n {
                            let xk = xd[r * n + k];
                            for (d, &gj) in dw[k * m..(k + 1) * m].iter_mut().zip(grow) {
                                *d += xk * gj;
                            }
                        }
                    }
                    accumulate(grads, *w, Tensor::new(vec![n, m], dw)?);
                }
            }
            Op::AddBias { x, b } => {
                if self.rg(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if self.rg(*b) {
                    let m = self.value(*b).len();
                    let mut db = vec![0.0f32; m];
                    for chunk in g.data().chunks(m) {
                        for (d, &v) in db.iter_mut().zip(chunk) {
                            *d += v;
                        }
                    }
                    accumulate(grads, *b, Tensor::new(vec![m], db)?);
                }
            }
            Op::Conv2d { x, w, geom } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (dx, dw) = conv_backward(
                    xv.data(),
                    wv.data(),
                    g.data(),
                    *geom,
                    self.rg(*x),
                    self.rg(*w),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                if let Some(dw) = dw {
                    accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw)?);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Tanh(x) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&y, &gv)| gv * (1.0 - y * y))
                    .collect();
                accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), data)?);
            }
            Op::MaxPool2 { x, argmax } => {
                let xv = self.value(*x);
                let mut dx = vec![0.0f32; xv.len()];
                for (&idx, &gv) in argmax.iter().zip(g.data()) {
                    dx[idx as usize] += gv;
                }
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(grads, *x, g.clone().reshape(shape)?);
            }
            Op::RowNorm(x) => {
                let xv = self.value(*x);
                let w = xv.row_len();
                let dx: Vec<f32> = if w == 1 {
                    g.data().to_vec()
                } else {
                    let mut dx = vec![0.0f32; xv.len()];
                    for (r, (&norm, &gv)) in node.value.data().iter().zip(g.data()).enumerate() {
                        if norm > 0.0 {
                            let scale = gv / norm;
                            for (d, &v) in dx[r * w..(r + 1) * w].iter_mut().zip(xv.row(r)) {
                                *d = scale * v;
                            }
                        }
                    }
                    dx
                };
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::SoftmaxXent {
                logits,
                probs,
                targets,
            } => {
                let lv = self.value(*logits);
                let scale = g.data()[0] / lv.rows() as f32;
                let dx = probs
                    .iter()
                    .zip(targets)
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), dx)?);
            }
            Op::SquaredError { pred, targets } => {
                let pv = self.value(*pred);
                let scale = 2.0 * g.data()[0] / targets.len() as f32;
                let dx = pv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                accumulate(grads, *pred, Tensor::new(pv.shape().to_vec(), dx)?);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn conv_forward(x: &[f32], w: &[f32], g: ConvGeom) -> Vec<f32> {
    let ConvGeom {
        batch,
        height,
        width,
        in_ch,
        out_ch,
        kernel,
    } = g;
    let pad = kernel / 2;
    let mut out = vec![0.0f32; batch * height * width * out_ch];
    for n in 0..batch {
        for i in 0..height {
            for j in 0..width {
                let o_off = ((n * height + i) * width + j) * out_ch;
                for di in 0..kernel {
                    let Some(ii) = (i + di).checked_sub(pad).filter(|&v| v < height) else {
                        continue;
                    };
                    for dj in 0..kernel {
                        let Some(jj) = (j + dj).checked_sub(pad).filter(|&v| v < width) else {
                            continue;
                        };
                        let x_off = ((n * height + ii) * width + jj) * in_ch;
                        let w_off = (di * kernel + dj) * in_ch * out_ch;
                        for c in 0..in_ch {
                            let xv = x[x_off + c];
                            let wrow = &w[w_off + c * out_ch..w_off + (c + 1) * out_ch];
                            for (o, &wv) in out[o_off..o_off + out_ch].iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    x: &[f32],
    w: &[f32],
    gout: &[f32],
    g: ConvGeom,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let ConvGeom {
        batch,
        height,
        width,
        in_ch,
        out_ch,
        kernel,
    } = g;
    let pad = kernel / 2;
    let mut dx = want_dx.then(|| vec![0.0f32; x.len()]);
    let mut dw = want_dw.then(|| vec![0.0f32; w.len()]);
    for n in 0..batch {
        for i in 0..height {
            for j in 0..width {
                let o_off = ((n * height + i) * width + j) * out_ch;
                let grow = &gout[o_off..o_off + out_ch];
                for di in 0..kernel {
                    let Some(ii) = (i + di).checked_sub(pad).filter(|&v| v < height) else {
                        continue;
                    };
                    for dj in 0..kernel {
                        let Some(jj) = (j + dj).checked_sub(pad).filter(|&v| v < width) else {
                            continue;
                        };
                        let x_off = ((n * height + ii) * width + jj) * in_ch;
                        let w_off = (di * kernel + dj) * in_ch * out_ch;
                        for c in 0..in_ch {
                            let wrow = &w[w_off + c * out_ch..w_off + (c + 1) * out_ch];
                            if let Some(dx) = dx.as_mut() {
                                dx[x_off + c] +=
                                    grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f32>();
                            }
                            if let Some(dw) = dw.as_mut() {
                                let xv = x[x_off + c];
                                for (d, &gv) in dw[w_off + c * out_ch..w_off + (c + 1) * out_ch]
                                    .iter_mut()
                                    .zip(grow)
                                {
                                    *d += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw)
}

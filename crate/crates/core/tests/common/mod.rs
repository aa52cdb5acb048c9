//! Test-only oracles written independently of the library's tape.
#![allow(dead_code)]

use modelgif::{Activation, ArchSpec, DiffModel, Layer, Rng};

/// Straight-line f64 forward pass of one unbatched input.
pub fn forward_f64(model: &DiffModel, x: &[f64]) -> Vec<f64> {
    let mut shape: Vec<usize> = model.input_shape().to_vec();
    let mut h: Vec<f64> = x.to_vec();
    for layer in model.layers() {
        match layer {
            Layer::Dense { weight, bias } => {
                let (n, m) = (weight.shape()[0], weight.shape()[1]);
                assert_eq!(h.len(), n);
                let w = weight.data();
                let mut out: Vec<f64> = bias.data().iter().map(|&b| f64::from(b)).collect();
                for k in 0..n {
                    for j in 0..m {
                        out[j] += h[k] * f64::from(w[k * m + j]);
                    }
                }
                h = out;
                shape = vec![m];
            }
            Layer::Conv2d { weight, bias } => {
                let (hh, ww, cin) = (shape[0], shape[1], shape[2]);
                let (k, cout) = (weight.shape()[0], weight.shape()[3]);
                let p = k / 2;
                let w = weight.data();
                let mut out = vec![0.0; hh * ww * cout];
                for i in 0..hh {
                    for j in 0..ww {
                        for co in 0..cout {
                            let mut acc = f64::from(bias.data()[co]);
                            for di in 0..k {
                                for dj in 0..k {
                                    let (ii, jj) = (
                                        i as isize + di as isize - p as isize,
                                        j as isize + dj as isize - p as isize,
                                    );
                                    if ii < 0 || jj < 0 || ii >= hh as isize || jj >= ww as isize {
                                        continue;
                                    }
                                    for ci in 0..cin {
                                        let xv = h[(ii as usize * ww + jj as usize) * cin + ci];
                                        acc += xv
                                            * f64::from(w[((di * k + dj) * cin + ci) * cout + co]);
                                    }
                                }
                            }
                            out[(i * ww + j) * cout + co] = acc;
                        }
                    }
                }
                h = out;
                shape = vec![hh, ww, cout];
            }
            Layer::Relu => h.iter_mut().for_each(|v| *v = v.max(0.0)),
            Layer::Tanh => h.iter_mut().for_each(|v| *v = v.tanh()),
            Layer::MaxPool2 => {
                let (hh, ww, c) = (shape[0], shape[1], shape[2]);
                let (oh, ow) = (hh / 2, ww / 2);
                let mut out = vec![0.0; oh * ow * c];
                for i in 0..oh {
                    for j in 0..ow {
                        for ch in 0..c {
                            let at = |a: usize, b: usize| h[(a * ww + b) * c + ch];
                            out[(i * ow + j) * c + ch] = at(2 * i, 2 * j)
                                .max(at(2 * i, 2 * j + 1))
                                .max(at(2 * i + 1, 2 * j))
                                .max(at(2 * i + 1, 2 * j + 1));
                        }
                    }
                }
                h = out;
                shape = vec![oh, ow, c];
            }
            Layer::Flatten => shape = vec![h.len()],
        }
    }
    h
}

/// The scalar whose input gradient the library reports: a one-output head
/// as is, otherwise the l2 norm of the logits.
pub fn scalar_f64(model: &DiffModel, x: &[f64]) -> f64 {
    let out = forward_f64(model, x);
    if out.len() == 1 {
        out[0]
    } else {
        out.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Central differences of [`scalar_f64`].
pub fn fd_gradient(model: &DiffModel, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (scalar_f64(model, &up) - scalar_f64(model, &down)) / (2.0 * h)
        })
        .collect()
}

pub fn random_tanh_mlp(rng: &mut Rng, dim: usize) -> DiffModel {
    let hidden = vec![4 + rng.below(12); 1 + rng.below(2)];
    let outputs = if rng.below(2) == 0 {
        1
    } else {
        2 + rng.below(4)
    };
    ArchSpec::mlp(vec![dim], hidden, outputs, Activation::Tanh)
        .init(rng)
        .expect("valid arch")
}

pub fn random_point(rng: &mut Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.uniform(0.0, 1.0)).collect()
}

/// `M(x) = Σᵢ xᵢ³/3`; the field is `x²` elementwise. Along `0 → x₁` the
/// curve is `(t³/3)·x₁²`, which the midpoint rule misses by `Θ(1/S²)`.
pub struct CubicSum {
    pub dim: usize,
}

impl modelgif::gif::GradientField for CubicSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn values(&self, xs: &modelgif::Tensor) -> modelgif::Result<Vec<f32>> {
        Ok((0..xs.rows())
            .map(|r| xs.row(r).iter().map(|v| v * v * v / 3.0).sum())
            .collect())
    }

    fn gradients(&self, xs: &modelgif::Tensor) -> modelgif::Result<modelgif::Tensor> {
        modelgif::Tensor::new(
            vec![xs.rows(), self.dim],
            xs.data().iter().map(|v| v * v).collect(),
        )
    }
}

/// Max over samples of ‖g(t_s) − (t_s³/3)x₁²‖ / ‖x₁²‖ for [`CubicSum`].
pub fn cubic_error(x1: &[f32], steps: usize) -> f64 {
    let field = CubicSum { dim: x1.len() };
    let curve = modelgif::gif::extract_curve(&field, &vec![0.0; x1.len()], x1, steps).unwrap();
    let sq: Vec<f64> = x1.iter().map(|&v| f64::from(v).powi(2)).collect();
    let norm = sq.iter().map(|v| v * v).sum::<f64>().sqrt();
    (1..=steps)
        .map(|s| {
            let t = s as f64 / steps as f64;
            let err: f64 = curve
                .at(s)
                .iter()
                .zip(&sq)
                .map(|(&g, &q)| (f64::from(g) - t.powi(3) / 3.0 * q).powi(2))
                .sum();
            err.sqrt() / norm
        })
        .fold(0.0, f64::max)
}

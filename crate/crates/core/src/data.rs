//! Datasets and the procedural task families used by the experiments.
//!
//! Every input lives in the unit box `[0, 1]^D`. Generators are pure
//! functions of their parameters and seed.

use std::f32::consts::PI;

use crate::error::{Error, Result};
use crate::model::Targets;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Transfer,
    Holdout,
    Forget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    /// `[N, input_shape...]`.
    pub inputs: Tensor,
    pub targets: Targets,
    pub tag: SplitTag,
    pub distribution: u32,
    /// Stable per-sample ids, unique within the generating distribution.
    pub ids: Vec<u64>,
}

impl DatasetSplit {
    pub fn new(
        inputs: Tensor,
        targets: Targets,
        tag: SplitTag,
        distribution: u32,
        ids: Vec<u64>,
    ) -> Result<Self> {
        if inputs.shape().len() < 2 {
            return Err(Error::invalid("dataset inputs need a batch axis"));
        }
        if inputs.rows() != targets.len() || ids.len() != inputs.rows() {
            return Err(Error::invalid(format!(
                "{} inputs, {} targets, {} ids",
                inputs.rows(),
                targets.len(),
                ids.len()
            )));
        }
        Ok(DatasetSplit {
            inputs,
            targets,
            tag,
            distribution,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.row_len()
    }

    pub fn point(&self, i: usize) -> &[f32] {
        self.inputs.row(i)
    }

    /// Rows `idx` as a batch tensor.
    pub fn batch_inputs(&self, idx: &[usize]) -> Tensor {
        let rows: Vec<&[f32]> = idx.iter().map(|&i| self.inputs.row(i)).collect();
        Tensor::stack(self.input_shape(), &rows).expect("rows share the input shape")
    }

    /// Subset by row index. Returns `None` for an empty selection.
    pub fn subset(&self, idx: &[usize], tag: SplitTag) -> Option<DatasetSplit> {
        if idx.is_empty() {
            return None;
        }
        Some(DatasetSplit {
            inputs: self.batch_inputs(idx),
            targets: self.targets.select(idx),
            tag,
            distribution: self.distribution,
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        })
    }

    pub fn with_targets(&self, targets: Targets) -> Result<DatasetSplit> {
        DatasetSplit::new(
            self.inputs.clone(),
            targets,
            self.tag,
            self.distribution,
            self.ids.clone(),
        )
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            _ => None,
        }
    }
}

/// Two well separated Gaussian blobs in `[0,1]^2`, labels 0/1.
pub fn gaussian_blobs(n: usize, spread: f32, seed: u64) -> DatasetSplit {
    let centers = [[0.25f32, 0.25], [0.75, 0.75]];
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        for d in 0..2 {
            data.push((centers[c][d] + spread * rng.normal()).clamp(0.0, 1.0));
        }
        labels.push(c);
    }
    DatasetSplit::new(
        Tensor::new(vec![n, 2], data).expect("consistent"),
        Targets::Classes { classes: 2, labels },
        SplitTag::Train,
        0,
        (0..n as u64).collect(),
    )
    .expect("consistent")
}

/// Class-conditional image task: each class owns a prototype made of a few
/// Gaussian bumps placed by the distribution seed; samples are jittered,
/// contrast-scaled, noisy copies of their prototype.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTask {
    pub side: usize,
    pub classes: usize,
    pub bumps_per_class: usize,
    pub noise: f32,
    pub distribution: u32,
    prototypes: Vec<Vec<f32>>,
}

impl ImageTask {
    pub fn new(
        side: usize,
        classes: usize,
        bumps_per_class: usize,
        noise: f32,
        distribution: u32,
    ) -> Self {
        let mut rng = Rng::derived(u64::from(distribution), 0x1a6e);
        let sigma = side as f32 / 8.0;
        let prototypes = (0..classes)
            .map(|_| {
                let bumps: Vec<(f32, f32, f32)> = (0..bumps_per_class)
                    .map(|_| {
                        (
                            rng.uniform(1.0, side as f32 - 1.0),
                            rng.uniform(1.0, side as f32 - 1.0),
                            rng.uniform(0.5, 1.0),
                        )
                    })
                    .collect();
                let mut img = vec![0.0f32; side * side];
                for (r, row) in img.chunks_mut(side).enumerate() {
                    for (c, px) in row.iter_mut().enumerate() {
                        let v: f32 = bumps
                            .iter()
                            .map(|&(br, bc, a)| {
                                let d2 = (r as f32 - br).powi(2) + (c as f32 - bc).powi(2);
                                a * (-d2 / (2.0 * sigma * sigma)).exp()
                            })
                            .sum();
                        *px = v.min(1.0);
                    }
                }
                img
            })
            .collect();
        ImageTask {
            side,
            classes,
            bumps_per_class,
            noise,
            distribution,
            prototypes,
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.side, self.side, 1]
    }

    /// `n` samples with balanced classes; ids are `id_base + i`.
    pub fn sample(&self, n: usize, seed: u64, id_base: u64, tag: SplitTag) -> DatasetSplit {
        let mut rng = Rng::derived(seed, 0x5a3b ^ u64::from(self.distribution));
        let s = self.side as isize;
        let mut data = Vec::with_capacity(n * self.side * self.side);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.classes;
            let (dr, dc) = (rng.below(3) as isize - 1, rng.below(3) as isize - 1);
            let contrast = rng.uniform(0.6, 1.0);
            let proto = &self.prototypes[c];
            for r in 0..s {
                for col in 0..s {
                    let (sr, sc) = (r - dr, col - dc);
                    let base = if (0..s).contains(&sr) && (0..s).contains(&sc) {
                        proto[(sr * s + sc) as usize]
                    } else {
                        0.0
                    };
                    data.push((contrast * base + self.noise * rng.normal()).clamp(0.0, 1.0));
                }
            }
            labels.push(c);
        }
        DatasetSplit::new(
            Tensor::new(vec![n, self.side, self.side, 1], data).expect("consistent"),
            Targets::Classes {
                classes: self.classes,
                labels,
            },
            tag,
            self.distribution,
            (0..n as u64).map(|i| id_base + i).collect(),
        )
        .expect("consistent")
    }

    /// Class prototypes, row-major `side×side`.
    pub fn prototypes(&self) -> &[Vec<f32>] {
        &self.prototypes
    }
}

/// Family of binary tasks over one shared input distribution. The label of
/// an input is the side of a line through the centre of a fixed 2-D feature
/// plane, rotated by the task angle; a `permuted` task flips labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RotatedTask {
    pub angle_deg: f32,
    pub permuted: bool,
}

impl RotatedTask {
    pub fn new(angle_deg: f32) -> Self {
        RotatedTask {
            angle_deg,
            permuted: false,
        }
    }

    pub fn permuted(angle_deg: f32) -> Self {
        RotatedTask {
            angle_deg,
            permuted: true,
        }
    }

    /// Angle used for ground-truth relatedness. Permuting labels keeps the
    /// partition, so a permuted task sits at its base angle.
    pub fn effective_angle(&self) -> f32 {
        self.angle_deg
    }

    pub fn name(&self) -> String {
        if self.permuted {
            format!("rot{:02}-perm", self.angle_deg as i32)
        } else {
            format!("rot{:02}", self.angle_deg as i32)
        }
    }
}

/// The shared input distribution of a [`RotatedTask`] family: `side×side`
/// grayscale images whose two latent coordinates set the mean brightness of
/// the left/right and top/bottom halves.
#[derive(Clone, Debug, PartialEq)]
pub struct RotatedFamily {
    pub side: usize,
    pub noise: f32,
}

impl RotatedFamily {
    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.side, self.side, 1]
    }

    fn latent_pattern(&self) -> (Vec<f32>, Vec<f32>) {
        let s = self.side;
        let half = s as f32 / 2.0;
        let mut horiz = vec![0.0f32; s * s];
        let mut vert = vec![0.0f32; s * s];
        for r in 0..s {
            for c in 0..s {
                horiz[r * s + c] = if (c as f32) < half { -1.0 } else { 1.0 };
                vert[r * s + c] = if (r as f32) < half { -1.0 } else { 1.0 };
            }
        }
        (horiz, vert)
    }

    /// `n` inputs labeled by `task`. The latent draw depends only on `seed`,
    /// so tasks sampled with one seed share their inputs.
    pub fn sample(&self, task: &RotatedTask, n: usize, seed: u64, tag: SplitTag) -> DatasetSplit {
        let mut rng = Rng::derived(seed, 0x707a);
        let (horiz, vert) = self.latent_pattern();
        let theta = task.angle_deg * PI / 180.0;
        let normal = (theta.cos(), theta.sin());
        let mut data = Vec::with_capacity(n * self.side * self.side);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.uniform(-1.0, 1.0);
            let v = rng.uniform(-1.0, 1.0);
            for (h, w) in horiz.iter().zip(&vert) {
                let px = 0.5 + 0.2 * (u * h + v * w) + self.noise * rng.normal();
                data.push(px.clamp(0.0, 1.0));
            }
            let side = u * normal.0 + v * normal.1 >= 0.0;
            labels.push(usize::from(side != task.permuted));
        }
        DatasetSplit::new(
            Tensor::new(vec![n, self.side, self.side, 1], data).expect("consistent"),
            Targets::Classes { classes: 2, labels },
            tag,
            0,
            (0..n as u64).collect(),
        )
        .expect("consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_in_unit_box() {
        let d = gaussian_blobs(100, 0.05, 1);
        assert_eq!(d.len(), 100);
        assert!(d.inputs.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn image_task_is_deterministic_and_balanced() {
        let task = ImageTask::new(16, 10, 3, 0.1, 4);
        let a = task.sample(50, 9, 0, SplitTag::Train);
        let b = task.sample(50, 9, 0, SplitTag::Train);
        assert_eq!(a, b);
        assert_eq!(a.input_shape(), &[16, 16, 1]);
        let labels = a.class_labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 3).count(), 5);
        assert!(a.inputs.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rotated_tasks_share_inputs() {
        let fam = RotatedFamily {
            side: 8,
            noise: 0.05,
        };
        let a = fam.sample(&RotatedTask::new(0.0), 20, 3, SplitTag::Train);
        let b = fam.sample(&RotatedTask::new(60.0), 20, 3, SplitTag::Train);
        assert_eq!(a.inputs, b.inputs);
        let p = fam.sample(&RotatedTask::permuted(0.0), 20, 3, SplitTag::Train);
        let (la, lp) = (a.class_labels().unwrap(), p.class_labels().unwrap());
        assert!(la.iter().zip(lp).all(|(x, y)| x != y));
    }

    #[test]
    fn subset_keeps_ids() {
        let d = gaussian_blobs(10, 0.05, 1);
        let s = d.subset(&[2, 5], SplitTag::Forget).unwrap();
        assert_eq!(s.ids, vec![2, 5]);
        assert!(d.subset(&[], SplitTag::Forget).is_none());
    }
}

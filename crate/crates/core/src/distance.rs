//! Integrated point-wise cosine distance between fingerprints.
//!
//! For aligned curves `gⁱ`, `gʲ` sampled on the same grid,
//! `d = Σ_k (1/S) Σ_s (1 − cos(gⁱ'ᵏ(t_s), gʲ'ᵏ(t_s)))`, so each curve adds a
//! value in `[0, 2]` and a model pair lands in `[0, 2K]`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gif::{GiFCurve, GiFCurveSet};

/// Norm floor of the guarded cosine.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    IntegratedCosine,
    /// Reserved; not implemented.
    Hausdorff,
    /// Reserved; not implemented.
    Frechet,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::IntegratedCosine => "integrated-cosine",
            Metric::Hausdorff => "hausdorff",
            Metric::Frechet => "frechet",
        }
    }
}

/// `1 − cos(u, v)` with norms floored at [`COSINE_EPS`]; two null vectors
/// agree (distance 0).
fn cosine_gap(u: &[f32], v: &[f32]) -> f64 {
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    cosine_gap_from(dot, uu.sqrt(), vv.sqrt())
}

fn cosine_gap_from(dot: f64, nu: f64, nv: f64) -> f64 {
    if nu < COSINE_EPS && nv < COSINE_EPS {
        return 0.0;
    }
    let cos = dot / (nu.max(COSINE_EPS) * nv.max(COSINE_EPS));
    (1.0 - cos).clamp(0.0, 2.0)
}

/// Mean over the `S` grid points of one curve pair.
fn block_distance(a: &[f32], b: &[f32], steps: usize, dim: usize) -> f64 {
    let total: f64 = (0..steps)
        .map(|s| cosine_gap(&a[s * dim..(s + 1) * dim], &b[s * dim..(s + 1) * dim]))
        .sum();
    total / steps as f64
}

pub fn curve_distance(a: &GiFCurve, b: &GiFCurve) -> Result<f64> {
    if a.steps != b.steps || a.dim() != b.dim() {
        return Err(Error::IncomparableCurves(format!(
            "(S, D) = {:?} vs {:?}",
            (a.steps, a.dim()),
            (b.steps, b.dim())
        )));
    }
    if a.endpoint != b.endpoint {
        return Err(Error::IncomparableCurves(
            "reference endpoints differ".into(),
        ));
    }
    if a.baseline != b.baseline {
        return Err(Error::IncomparableCurves("baselines differ".into()));
    }
    if a.rule != b.rule {
        return Err(Error::IncomparableCurves("quadrature rules differ".into()));
    }
    Ok(block_distance(&a.samples, &b.samples, a.steps, a.dim()))
}

fn check_pair(a: &GiFCurveSet, b: &GiFCurveSet) -> Result<()> {
    match a.incompatibility(b) {
        Some(reason) => Err(Error::IncomparableFingerprints {
            left: a.model_id.clone(),
            right: b.model_id.clone(),
            reason,
        }),
        None => Ok(()),
    }
}

/// Sum of per-curve distances over the `K` aligned curves.
pub fn model_distance(a: &GiFCurveSet, b: &GiFCurveSet) -> Result<f64> {
    check_pair(a, b)?;
    Ok((0..a.curves)
        .map(|k| block_distance(a.curve(k), b.curve(k), a.steps, a.dim))
        .sum())
}

/// Per-sample norms of every grid point, reused across all pairs.
fn grid_norms(f: &GiFCurveSet) -> Vec<f64> {
    f.data
        .chunks(f.dim)
        .map(|p| {
            p.iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn pair_distance(a: &GiFCurveSet, na: &[f64], b: &GiFCurveSet, nb: &[f64]) -> f64 {
    let d = a.dim;
    let mut total = 0.0f64;
    for k in 0..a.curves {
        let mut curve = 0.0f64;
        for s in 0..a.steps {
            let g = k * a.steps + s;
            let (u, v) = (&a.data[g * d..(g + 1) * d], &b.data[g * d..(g + 1) * d]);
            let dot: f64 = u
                .iter()
                .zip(v)
                .map(|(&x, &y)| f64::from(x) * f64::from(y))
                .sum();
            curve += cosine_gap_from(dot, na[g], nb[g]);
        }
        total += curve / a.steps as f64;
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    /// Row-major `N×N`.
    pub values: Vec<f64>,
    pub metric: Metric,
    pub anchor_hash: u64,
    /// Curves per fingerprint; the distance range is `[0, 2K]`.
    pub curves: usize,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn by_id(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.get(self.index_of(a)?, self.index_of(b)?))
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        upper_triangle(&self.values, self.len())
    }

    /// Matrix CSV: the first row holds `corner` followed by the ids, each
    /// following row an id and its values with 9 significant digits.
    pub fn to_csv(&self, corner: &str) -> String {
        matrix_csv(corner, &self.ids, &self.values)
    }

    pub fn from_csv(
        text: &str,
        metric: Metric,
        anchor_hash: u64,
        curves: usize,
    ) -> Result<(String, Self)> {
        let (corner, ids, values) = parse_matrix_csv(text)?;
        Ok((
            corner,
            DistanceMatrix {
                ids,
                values,
                metric,
                anchor_hash,
                curves,
            },
        ))
    }
}

pub(crate) fn upper_triangle(values: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(values[i * n + j]);
        }
    }
    out
}

pub(crate) fn matrix_csv(corner: &str, ids: &[String], values: &[f64]) -> String {
    let n = ids.len();
    let mut out = String::new();
    out.push_str(corner);
    for id in ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&ids[i]);
        for j in 0..n {
            let _ = write!(out, ",{:.8e}", values[i * n + j]);
        }
        out.push('\n');
    }
    out
}

pub(crate) fn parse_matrix_csv(text: &str) -> Result<(String, Vec<String>, Vec<f64>)> {
    let bad = |why: String| Error::format("matrix csv", why);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut cells = header.split(',');
    let corner = cells.next().unwrap_or_default().to_string();
    let ids: Vec<String> = cells.map(str::to_string).collect();
    let n = ids.len();
    let mut values = Vec::with_capacity(n * n);
    for (i, line) in lines.enumerate() {
        let mut cells = line.split(',');
        let id = cells.next().unwrap_or_default();
        if ids.get(i).map(String::as_str) != Some(id) {
            return Err(bad(format!("row {i} is labeled `{id}`")));
        }
        for c in cells {
            values.push(
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {i}: {e}")))?,
            );
        }
    }
    if values.len() != n * n {
        return Err(bad(format!(
            "expected {} values, found {}",
            n * n,
            values.len()
        )));
    }
    Ok((corner, ids, values))
}

/// All `N(N−1)/2` pairs computed once in parallel and mirrored; the diagonal
/// is zero.
pub fn distance_matrix(fingerprints: &[GiFCurveSet]) -> Result<DistanceMatrix> {
    let n = fingerprints.len();
    if n < 2 {
        return Err(Error::invalid(
            "a distance matrix needs at least two fingerprints",
        ));
    }
    for i in 0..n {
        for j in i + 1..n {
            check_pair(&fingerprints[i], &fingerprints[j])?;
        }
    }
    let norms: Vec<Vec<f64>> = fingerprints.par_iter().map(grid_norms).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| pair_distance(&fingerprints[i], &norms[i], &fingerprints[j], &norms[j]))
        .collect();
    let mut values = vec![0.0f64; n * n];
    for (&(i, j), &d) in pairs.iter().zip(&dists) {
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    Ok(DistanceMatrix {
        ids: fingerprints.iter().map(|f| f.model_id.clone()).collect(),
        values,
        metric: Metric::IntegratedCosine,
        anchor_hash: fingerprints[0].anchor_hash,
        curves: fingerprints[0].curves,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
    pub normalization: &'static str,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        upper_triangle(&self.values, self.len())
    }

    pub fn to_csv(&self, corner: &str) -> String {
        matrix_csv(corner, &self.ids, &self.values)
    }
}

/// `1 − d/(2K)`: the affine map sending `[0, 2K]` onto `[1, 0]`.
pub fn to_affinity(dm: &DistanceMatrix) -> AffinityMatrix {
    let range = 2.0 * dm.curves.max(1) as f64;
    AffinityMatrix {
        ids: dm.ids.clone(),
        values: dm.values.iter().map(|d| 1.0 - d / range).collect(),
        normalization: "1-d/2K",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gif::{Baseline, Quadrature};

    fn set(id: &str, curves: usize, steps: usize, dim: usize, data: Vec<f32>) -> GiFCurveSet {
        GiFCurveSet {
            model_id: id.into(),
            model_hash: 0,
            anchor_hash: 7,
            baseline: Baseline::Zero,
            curves,
            steps,
            dim,
            rule: Quadrature::Midpoint,
            scalarization: None,
            data,
        }
    }

    #[test]
    fn guarded_cosine_cases() {
        assert_eq!(cosine_gap(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((cosine_gap(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((cosine_gap(&[1.0, 2.0], &[-1.0, -2.0]) - 2.0).abs() < 1e-12);
        assert!(cosine_gap(&[1.0, 2.0], &[2.0, 4.0]).abs() < 1e-12);
    }

    #[test]
    fn affinity_endpoints() {
        let dm = DistanceMatrix {
            ids: vec!["a".into(), "b".into()],
            values: vec![0.0, 4.0, 4.0, 0.0],
            metric: Metric::IntegratedCosine,
            anchor_hash: 0,
            curves: 4,
        };
        let a = to_affinity(&dm);
        assert_eq!(a.values, vec![1.0, 0.5, 0.5, 1.0]);
        let dm2 = DistanceMatrix {
            values: vec![0.0, 8.0, 8.0, 0.0],
            ..dm
        };
        assert_eq!(to_affinity(&dm2).values[1], 0.0);
    }

    #[test]
    fn mismatched_anchor_reports_ids() {
        let a = set("a", 1, 2, 1, vec![1.0, 1.0]);
        let mut b = set("b", 1, 2, 1, vec![1.0, 1.0]);
        b.anchor_hash = 8;
        match distance_matrix(&[a, b]).unwrap_err() {
            Error::IncomparableFingerprints { left, right, .. } => {
                assert_eq!((left.as_str(), right.as_str()), ("a", "b"))
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let a = set("a", 1, 2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let b = set("b", 1, 2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        let dm = distance_matrix(&[a, b]).unwrap();
        let csv = dm.to_csv("cfg");
        assert!(csv.starts_with("cfg,a,b\n"));
        let (corner, back) =
            DistanceMatrix::from_csv(&csv, dm.metric, dm.anchor_hash, dm.curves).unwrap();
        assert_eq!(corner, "cfg");
        assert_eq!(back, dm);
    }
}

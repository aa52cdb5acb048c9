//! Post-processing of distance matrices: rank correlation, similarity trees,
//! detection AUC and unlearning verdicts.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::zoo::Lineage;

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::invalid("spearman needs at least 3 pairs"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("spearman input contains NaN"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean).powi(2);
        vb += (y - mean).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "an input has zero rank variance".into(),
        ));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation over the strict upper triangles of two `N×N`
/// matrices.
pub fn spearman_matrices(a: &[f64], b: &[f64], n: usize) -> Result<f64> {
    if a.len() != n * n || b.len() != n * n {
        return Err(Error::invalid("matrix sizes do not match"));
    }
    spearman(
        &crate::distance::upper_triangle(a, n),
        &crate::distance::upper_triangle(b, n),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dendrogram {
    Leaf(String),
    Merge {
        left: Box<Dendrogram>,
        right: Box<Dendrogram>,
        height: f64,
    },
}

impl Dendrogram {
    pub fn height(&self) -> f64 {
        match self {
            Dendrogram::Leaf(_) => 0.0,
            Dendrogram::Merge { height, .. } => *height,
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        match self {
            Dendrogram::Leaf(id) => vec![id.as_str()],
            Dendrogram::Merge { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    /// Merge heights in post-order.
    pub fn merge_heights(&self) -> Vec<f64> {
        match self {
            Dendrogram::Leaf(_) => Vec::new(),
            Dendrogram::Merge {
                left,
                right,
                height,
            } => {
                let mut v = left.merge_heights();
                v.extend(right.merge_heights());
                v.push(*height);
                v
            }
        }
    }

    /// Every merge sits at least as high as its children.
    pub fn is_monotone(&self) -> bool {
        match self {
            Dendrogram::Leaf(_) => true,
            Dendrogram::Merge {
                left,
                right,
                height,
            } => {
                *height >= left.height()
                    && *height >= right.height()
                    && left.is_monotone()
                    && right.is_monotone()
            }
        }
    }

    /// Newick text with branch lengths; `comment`, when given, is embedded
    /// as a bracketed Newick comment before the terminating `;`.
    pub fn to_newick(&self, comment: Option<&str>) -> String {
        fn walk(node: &Dendrogram, parent: f64, out: &mut String) {
            match node {
                Dendrogram::Leaf(id) => {
                    let _ = write!(out, "{id}:{:.6}", parent);
                }
                Dendrogram::Merge {
                    left,
                    right,
                    height,
                } => {
                    out.push('(');
                    walk(left, *height, out);
                    out.push(',');
                    walk(right, *height, out);
                    let _ = write!(out, "):{:.6}", parent - height);
                }
            }
        }
        let mut out = String::new();
        match self {
            Dendrogram::Leaf(id) => out.push_str(id),
            Dendrogram::Merge {
                left,
                right,
                height,
            } => {
                out.push('(');
                walk(left, *height, &mut out);
                out.push(',');
                walk(right, *height, &mut out);
                out.push(')');
            }
        }
        if let Some(c) = comment {
            let _ = write!(out, "[{c}]");
        }
        out.push_str(";\n");
        out
    }

    pub fn to_dot(&self, comment: Option<&str>) -> String {
        fn walk(node: &Dendrogram, next: &mut usize, out: &mut String) -> usize {
            let me = *next;
            *next += 1;
            match node {
                Dendrogram::Leaf(id) => {
                    let _ = writeln!(out, "  n{me} [label=\"{id}\", shape=box];");
                }
                Dendrogram::Merge {
                    left,
                    right,
                    height,
                } => {
                    let _ = writeln!(out, "  n{me} [label=\"{height:.4}\"];");
                    let l = walk(left, next, out);
                    let r = walk(right, next, out);
                    let _ = writeln!(out, "  n{me} -> n{l};\n  n{me} -> n{r};");
                }
            }
            me
        }
        let mut out = String::new();
        if let Some(c) = comment {
            let _ = writeln!(out, "// {c}");
        }
        out.push_str("digraph dendrogram {\n");
        let mut next = 0;
        walk(self, &mut next, &mut out);
        out.push_str("}\n");
        out
    }
}

struct Cluster {
    tree: Dendrogram,
    members: Vec<usize>,
    key: String,
}

/// Average-linkage agglomerative clustering on dissimilarity `1 − affinity`.
/// Among equally close pairs the one with the lexicographically smallest
/// (min member id, min member id) is merged first, and the child holding
/// the smaller id goes left, so the tree does not depend on input order.
pub fn cluster(ids: &[String], affinity: &[f64]) -> Result<Dendrogram> {
    let n = ids.len();
    if n < 2 {
        return Err(Error::invalid("clustering needs at least two models"));
    }
    if affinity.len() != n * n {
        return Err(Error::invalid("affinity matrix size does not match ids"));
    }
    let dis = |i: usize, j: usize| 1.0 - affinity[i * n + j];
    let mut clusters: Vec<Cluster> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Cluster {
            tree: Dendrogram::Leaf(id.clone()),
            members: vec![i],
            key: id.clone(),
        })
        .collect();
    let linkage = |a: &Cluster, b: &Cluster| {
        let mut total = 0.0;
        for &i in &a.members {
            for &j in &b.members {
                total += 0.5 * (dis(i, j) + dis(j, i));
            }
        }
        total / (a.members.len() * b.members.len()) as f64
    };
    let mut floor = 0.0f64;
    while clusters.len() > 1 {
        let mut best: Option<(f64, String, String, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = linkage(&clusters[a], &clusters[b]);
                let (ka, kb) = if clusters[a].key <= clusters[b].key {
                    (clusters[a].key.clone(), clusters[b].key.clone())
                } else {
                    (clusters[b].key.clone(), clusters[a].key.clone())
                };
                let better = match &best {
                    None => true,
                    Some((bd, bka, bkb, _, _)) => d < *bd || (d == *bd && (&ka, &kb) < (bka, bkb)),
                };
                if better {
                    best = Some((d, ka, kb, a, b));
                }
            }
        }
        let (d, _, _, a, b) = best.expect("at least one pair");
        let cb = clusters.remove(b);
        let ca = clusters.remove(a);
        let (first, second) = if ca.key <= cb.key { (ca, cb) } else { (cb, ca) };
        floor = floor.max(d);
        let mut members = first.members;
        members.extend(second.members);
        clusters.push(Cluster {
            tree: Dendrogram::Merge {
                left: Box::new(first.tree),
                right: Box::new(second.tree),
                height: floor,
            },
            members,
            key: first.key,
        });
    }
    Ok(clusters.pop().expect("one cluster").tree)
}

/// `P(pos > neg) + ½·P(pos = neg)` over all pairs, and the ROC curve as
/// `(false positive rate, true positive rate)` points from `(0,0)` to
/// `(1,1)` with thresholds at each distinct score, highest first.
pub fn auc_roc(positive: &[f64], negative: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::invalid("AUC needs positive and negative scores"));
    }
    let mut wins = 0.0;
    for &p in positive {
        for &q in negative {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    let auc = wins / (positive.len() * negative.len()) as f64;

    let mut thresholds: Vec<f64> = positive.iter().chain(negative).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut roc = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = positive.iter().filter(|&&p| p >= t).count() as f64 / positive.len() as f64;
        let fp = negative.iter().filter(|&&q| q >= t).count() as f64 / negative.len() as f64;
        roc.push((fp, tp));
    }
    Ok((auc, roc))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suspect {
    pub id: String,
    pub kind: Lineage,
    pub distance: f64,
}

impl Suspect {
    /// Higher is more suspicious.
    pub fn score(&self) -> f64 {
        -self.distance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyAuc {
    pub kind: Lineage,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub victim: String,
    pub suspects: Vec<Suspect>,
    pub families: Vec<FamilyAuc>,
}

/// Scores every suspect by negative distance to the victim and computes the
/// AUC of each derived family against the `negative_kind` models.
pub fn detection_report(
    victim: &str,
    suspects: Vec<Suspect>,
    negative_kind: Lineage,
) -> Result<DetectionReport> {
    let negatives: Vec<f64> = suspects
        .iter()
        .filter(|s| s.kind == negative_kind)
        .map(Suspect::score)
        .collect();
    let mut kinds: Vec<Lineage> = suspects
        .iter()
        .map(|s| s.kind)
        .filter(|&k| k != negative_kind && k != Lineage::Victim)
        .collect();
    kinds.sort();
    kinds.dedup();
    let mut families = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let positives: Vec<f64> = suspects
            .iter()
            .filter(|s| s.kind == kind)
            .map(Suspect::score)
            .collect();
        let (auc, roc) = auc_roc(&positives, &negatives)?;
        families.push(FamilyAuc { kind, auc, roc });
    }
    Ok(DetectionReport {
        victim: victim.to_string(),
        suspects,
        families,
    })
}

impl DetectionReport {
    pub fn auc(&self, kind: Lineage) -> Option<f64> {
        self.families.iter().find(|f| f.kind == kind).map(|f| f.auc)
    }

    /// `family,auc` table, one row per attack family.
    pub fn auc_table(&self) -> String {
        let mut out = String::from("family,auc\n");
        for f in &self.families {
            let _ = writeln!(out, "{},{:.4}", f.kind, f.auc);
        }
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("family,fpr,tpr\n");
        for f in &self.families {
            for (fp, tp) in &f.roc {
                let _ = writeln!(out, "{},{fp:.6},{tp:.6}", f.kind);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("victim = {}\n", self.victim);
        for s in &self.suspects {
            let _ = writeln!(
                out,
                "suspect {} kind={} distance={:.6} score={:.6}",
                s.id,
                s.kind,
                s.distance,
                s.score()
            );
        }
        for f in &self.families {
            let _ = writeln!(out, "auc {} = {:.4}", f.kind, f.auc);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearningReport {
    pub d_unrelated: f64,
    pub d_exact: f64,
    pub approx_series: Vec<f64>,
    /// The exactly unlearned model sits farther from the reference than an
    /// unrelated model trained on all data.
    pub exact_detected: bool,
    /// The first approximate checkpoint is still closer than the unrelated
    /// model.
    pub approx_incomplete: bool,
    /// Distance to the reference grows with unlearning epochs.
    pub forgetting_trend: bool,
    pub trend_correlation: Option<f64>,
}

pub fn unlearning_report(
    d_unrelated: f64,
    d_exact: f64,
    approx_series: &[f64],
) -> Result<UnlearningReport> {
    if d_unrelated < 0.0 || d_exact < 0.0 || approx_series.iter().any(|&d| d < 0.0) {
        return Err(Error::invalid("distances must be non-negative"));
    }
    let epochs: Vec<f64> = (1..=approx_series.len()).map(|e| e as f64).collect();
    let trend = spearman(&epochs, approx_series).ok();
    Ok(UnlearningReport {
        d_unrelated,
        d_exact,
        approx_series: approx_series.to_vec(),
        exact_detected: d_exact > d_unrelated,
        approx_incomplete: approx_series.first().is_some_and(|&d| d < d_unrelated),
        forgetting_trend: trend.is_some_and(|r| r > 0.0),
        trend_correlation: trend,
    })
}

impl UnlearningReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "d_unrelated = {:.6}", self.d_unrelated);
        let _ = writeln!(out, "d_exact = {:.6}", self.d_exact);
        let _ = writeln!(out, "exact_detected = {}", self.exact_detected);
        let _ = writeln!(out, "approx_incomplete = {}", self.approx_incomplete);
        let _ = writeln!(out, "forgetting_trend = {}", self.forgetting_trend);
        if let Some(r) = self.trend_correlation {
            let _ = writeln!(out, "trend_spearman = {r:.4}");
        }
        out
    }

    /// `epoch,d_approx,d_unrelated,d_exact`, one row per checkpoint.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("epoch,d_approx,d_unrelated,d_exact\n");
        for (e, d) in self.approx_series.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{d:.6},{:.6},{:.6}",
                e + 1,
                self.d_unrelated,
                self.d_exact
            );
        }
        out
    }
}

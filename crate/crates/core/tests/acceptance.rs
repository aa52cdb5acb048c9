//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line straight to stderr, so the lines show up
//! even when the harness captures output.

mod common;

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{cubic_error, fd_gradient, random_point, random_tanh_mlp};
use modelgif::data::{ImageTask, SplitTag};
use modelgif::distance::{distance_matrix, model_distance};
use modelgif::experiments::{IpDetectConfig, IpDetectOutcome, TaskRelConfig, UnlearnConfig};
use modelgif::gif::analytic::HalfSquaredNorm;
use modelgif::gif::{completeness_residual, extract_curve, fingerprint, Baseline, GradientField};
use modelgif::sampler::{
    box_mask, mix_with_mask, sample_cutmix, sample_pgd, sample_random, CutMixConfig,
};
use modelgif::zoo::{Lineage, PgdConfig};
use modelgif::{Activation, ArchSpec, DiffModel, Layer, Rng, Tensor};

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn finish(n: u32, start: Instant, budget: Duration, ok: bool, detail: String) {
    finish_after(n, start.elapsed(), budget, ok, detail);
}

fn finish_after(n: u32, elapsed: Duration, budget: Duration, ok: bool, detail: String) {
    let pass = ok && elapsed < budget;
    report(
        n,
        pass,
        &format!(
            "({detail}; {:.1}s of {}s)",
            elapsed.as_secs_f64(),
            budget.as_secs()
        ),
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = Rng::new(101);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for _ in 0..100 {
        let dim = 2 + rng.below(31);
        let model = random_tanh_mlp(&mut rng, dim);
        let x = random_point(&mut rng, dim);
        let g = model.input_gradient(&Tensor::from_vec(x.clone())).unwrap();
        let xd: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        for (a, b) in g.data().iter().zip(fd_gradient(&model, &xd, 1e-6)) {
            if b.abs() > 1e-4 {
                checked += 1;
                worst = worst.max((f64::from(*a) - b).abs() / b.abs());
            }
        }
    }
    finish(
        1,
        start,
        Duration::from_secs(30),
        worst <= 0.01 && checked > 0,
        format!("100 pairs, {checked} coordinates, worst relative error {worst:.2e}"),
    );
}

fn half_norm_error(x1: &[f32], steps: usize) -> f64 {
    let field = HalfSquaredNorm { dim: x1.len() };
    let curve = extract_curve(&field, &vec![0.0; x1.len()], x1, steps).unwrap();
    let norm = x1.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
    (1..=steps)
        .map(|s| {
            let t = s as f64 / steps as f64;
            let e: f64 = curve
                .at(s)
                .iter()
                .zip(x1)
                .map(|(&g, &x)| (f64::from(g) - t * t / 2.0 * f64::from(x)).powi(2))
                .sum();
            e.sqrt() / norm
        })
        .fold(0.0, f64::max)
}

/// The half squared norm's field is linear along a straight path, where the
/// midpoint rule is exact; the convergence rate is therefore measured on
/// `Σ xᵢ³/3`, whose field is quadratic along the path.
#[test]
fn criterion_2_quadrature_accuracy_and_rate() {
    let start = Instant::now();
    let mut rng = Rng::new(202);
    let mut worst = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..10 {
        let x1 = random_point(&mut rng, 64);
        worst = worst.max(half_norm_error(&x1, 64));
        for s in [16, 32, 64, 128] {
            min_ratio = min_ratio.min(cubic_error(&x1, s) / cubic_error(&x1, 2 * s));
        }
    }
    finish(
        2,
        start,
        Duration::from_secs(5),
        worst <= 1e-3 && min_ratio >= 3.5,
        format!("half-norm error at S=64 {worst:.2e}; smallest error ratio on doubling S {min_ratio:.3}"),
    );
}

fn random_relu_mlp(rng: &mut Rng, dim: usize) -> DiffModel {
    let outputs = if rng.below(2) == 0 { 1 } else { 3 };
    ArchSpec::mlp(vec![dim], vec![16], outputs, Activation::Relu)
        .init(rng)
        .unwrap()
}

/// Worst relative residual at S=512 and the largest absolute increase of the
/// residual on doubling S, over 20 random pairs of one network family.
fn completeness_stats(make: fn(&mut Rng, usize) -> DiffModel, seed: u64) -> (f64, f64) {
    let mut rng = Rng::new(seed);
    let (mut worst, mut rise) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let dim = 4 + rng.below(13);
        let model = make(&mut rng, dim);
        let x0 = random_point(&mut rng, dim);
        let x1 = random_point(&mut rng, dim);
        let v = model
            .values(&Tensor::new(vec![2, dim], [x0.clone(), x1.clone()].concat()).unwrap())
            .unwrap();
        let scale = f64::from((v[1] - v[0]).abs()) + 1e-6;
        let residuals: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&s| {
                completeness_residual(&model, &extract_curve(&model, &x0, &x1, s).unwrap()).unwrap()
            })
            .collect();
        worst = worst.max(residuals[3] / scale);
        for w in residuals.windows(2) {
            rise = rise.max(w[1] - w[0]);
        }
    }
    (worst, rise)
}

/// Monotone decay is required of tanh networks only; a ReLU field is
/// piecewise constant, and its midpoint residual moves with where the grid
/// falls relative to each kink.
#[test]
fn criterion_3_completeness() {
    let start = Instant::now();
    let (tanh_worst, tanh_rise) = completeness_stats(random_tanh_mlp, 303);
    let (relu_worst, relu_rise) = completeness_stats(random_relu_mlp, 304);
    let ok = tanh_worst <= 0.01 && relu_worst <= 0.05 && tanh_rise <= 1e-6;
    finish(
        3,
        start,
        Duration::from_secs(60),
        ok,
        format!(
            "tanh worst {tanh_worst:.2e}, relu worst {relu_worst:.2e}; largest residual rise on doubling S: tanh {tanh_rise:.1e}, relu {relu_rise:.1e} (not required)"
        ),
    );
}

#[test]
fn criterion_4_metric_properties() {
    let start = Instant::now();
    let mut rng = Rng::new(404);
    let task = ImageTask::new(8, 3, 1, 0.1, 0);
    let pool = task.sample(64, 1, 0, SplitTag::Holdout);
    let refs = sample_random(&[&pool], 16, 2).unwrap();
    let arch = ArchSpec::mlp(task.input_shape(), vec![12], 3, Activation::Tanh);
    let models: Vec<DiffModel> = (0..6).map(|_| arch.init(&mut rng).unwrap()).collect();
    let sets: Vec<_> = models
        .iter()
        .enumerate()
        .map(|(i, m)| fingerprint(m, &format!("m{i}"), &refs, Baseline::Zero, 32).unwrap())
        .collect();

    let self_max = sets
        .iter()
        .map(|s| model_distance(s, s).unwrap())
        .fold(0.0, f64::max);
    let mut symmetric = true;
    for a in &sets {
        for b in &sets {
            symmetric &= model_distance(a, b).unwrap() == model_distance(b, a).unwrap();
        }
    }

    let scalar_arch = ArchSpec::mlp(task.input_shape(), vec![12], 1, Activation::Tanh);
    let m = scalar_arch.init(&mut rng).unwrap();
    let scaled = m.with_output_affine(3.0, 7.0).unwrap();
    let fm = fingerprint(&m, "m", &refs, Baseline::Zero, 32).unwrap();
    let fs = fingerprint(&scaled, "3m+7", &refs, Baseline::Zero, 32).unwrap();
    let affine = model_distance(&fm, &fs).unwrap();

    let dm = distance_matrix(&sets).unwrap();
    let mut brute_equal = true;
    for i in 0..6 {
        for j in 0..6 {
            let brute = if i == j {
                0.0
            } else {
                model_distance(&sets[i], &sets[j]).unwrap()
            };
            brute_equal &= dm.get(i, j).to_bits() == brute.to_bits();
        }
    }
    finish(
        4,
        start,
        Duration::from_secs(60),
        self_max <= 1e-6 && symmetric && affine <= 1e-4 && brute_equal,
        format!(
            "self {self_max:.1e}, symmetric {symmetric}, d(M,3M+7) {affine:.1e}, matrix equals brute force {brute_equal}"
        ),
    );
}

struct IpRun {
    outcome: IpDetectOutcome,
    elapsed: Duration,
}

fn ip_run() -> &'static IpRun {
    static RUN: OnceLock<IpRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let outcome = IpDetectConfig::default()
            .run()
            .expect("ip detection protocol");
        IpRun {
            outcome,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_5_ip_detection() {
    let run = ip_run();
    let cfg = IpDetectConfig::default();
    assert_eq!((cfg.refs.count, cfg.steps), (256, 64));
    assert_eq!(run.outcome.zoo.len(), 25);
    let report = &run.outcome.report;
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [
        Lineage::FinetuneAll,
        Lineage::FinetuneLast,
        Lineage::Pruned,
        Lineage::ExtractLabel,
        Lineage::ExtractProb,
        Lineage::ExtractAdv,
    ] {
        let auc = report.auc(kind).unwrap_or(0.0);
        let need = if kind == Lineage::ExtractAdv {
            0.90
        } else {
            0.95
        };
        ok &= auc >= need;
        parts.push(format!("{kind} {auc:.2}"));
    }
    finish_after(
        5,
        run.elapsed,
        Duration::from_secs(15 * 60),
        ok,
        format!("AUC {}", parts.join(", ")),
    );
}

#[test]
fn criterion_6_task_relatedness() {
    let start = Instant::now();
    let rhos: Vec<f64> = (0..5)
        .map(|seed| {
            TaskRelConfig {
                seed,
                ..TaskRelConfig::default()
            }
            .run()
            .expect("task relatedness protocol")
            .report
            .spearman
        })
        .collect();
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let listed: Vec<String> = rhos.iter().map(|r| format!("{r:.3}")).collect();
    finish(
        6,
        start,
        Duration::from_secs(10 * 60),
        mean >= 0.7,
        format!("mean Spearman {mean:.3} over seeds [{}]", listed.join(", ")),
    );
}

#[test]
fn criterion_7_unlearning_verification() {
    let start = Instant::now();
    let (mut ordered, mut trending) = (0, 0);
    for seed in 0..10 {
        let cfg = UnlearnConfig {
            seed,
            ..UnlearnConfig::default()
        };
        assert_eq!(cfg.forget, 128);
        let r = cfg.run().expect("unlearning protocol").report;
        if r.approx_series[0] < r.d_unrelated && r.d_unrelated < r.d_exact {
            ordered += 1;
        }
        if r.trend_correlation.is_some_and(|c| c > 0.0) {
            trending += 1;
        }
    }
    finish(
        7,
        start,
        Duration::from_secs(10 * 60),
        ordered >= 8 && trending >= 8,
        format!("ordering held in {ordered}/10 seeds, positive trend in {trending}/10"),
    );
}

fn linear_probe(w: &[f32], b: f32) -> DiffModel {
    let d = w.len();
    DiffModel::new(
        vec![d],
        vec![Layer::dense(
            Tensor::new(vec![d, 1], w.to_vec()).unwrap(),
            Tensor::from_vec(vec![b]),
        )],
    )
    .unwrap()
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[test]
fn criterion_8_reference_sampler_contracts() {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();

    let mut rng = Rng::new(808);
    let shape = [6, 6, 2];
    let x = random_point(&mut rng, 72);
    let y = random_point(&mut rng, 72);
    let identity = mix_with_mask(&x, &y, &[1.0; 36], &shape).unwrap() == x;
    let zero = mix_with_mask(&x, &y, &[0.0; 36], &shape).unwrap() == y;
    let boxed = mix_with_mask(&x, &y, &box_mask(6, 6, 2, 1, 3, 2), &shape).unwrap();
    let mut box_ok = true;
    for i in 0..6 {
        for j in 0..6 {
            let inside = (2..5).contains(&i) && (1..3).contains(&j);
            for c in 0..2 {
                let k = (i * 6 + j) * 2 + c;
                box_ok &= boxed[k] == if inside { y[k] } else { x[k] };
            }
        }
    }
    ok &= identity && zero && box_ok;
    notes.push(format!(
        "cutmix identity {identity}, zero mask {zero}, box {box_ok}"
    ));

    let task = ImageTask::new(6, 3, 1, 0.2, 0);
    let pool = task.sample(40, 3, 0, SplitTag::Holdout);
    let d = pool.input_dim();
    let mut w: Vec<f32> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
    w[0] = 0.0;
    let probe = linear_probe(&w, 0.3);
    let start_pts = sample_random(&[&pool], 8, 5).unwrap();
    let mut pgd_err = 0.0f32;
    for (steps, alpha, eps) in [(1, 0.05, 0.1), (4, 0.05, 0.1), (3, 0.2, 0.5)] {
        let cfg = PgdConfig { steps, alpha, eps };
        let out = sample_pgd(&[&pool], 8, &probe, &cfg, 5).unwrap();
        let travel = (steps as f32 * alpha).min(eps);
        for k in 0..8 {
            for ((&o, &x0), &wi) in out.point(k).iter().zip(start_pts.point(k)).zip(&w) {
                let lo = (x0 - eps).max(0.0);
                let hi = (x0 + eps).min(1.0);
                let expected = (x0 + travel * sign(wi)).clamp(lo, hi);
                pgd_err = pgd_err.max((o - expected).abs());
            }
        }
    }
    ok &= pgd_err <= 1e-6;
    notes.push(format!("pgd closed-form max error {pgd_err:.1e}"));

    let big = task.sample(100, 9, 0, SplitTag::Holdout);
    let draw = || {
        vec![
            sample_random(&[&big], 32, 17).unwrap(),
            sample_cutmix(&[&big], 32, 17, &CutMixConfig::default()).unwrap(),
            sample_pgd(
                &[&big],
                32,
                &probe,
                &PgdConfig {
                    steps: 5,
                    alpha: 0.02,
                    eps: 0.05,
                },
                17,
            )
            .unwrap(),
        ]
    };
    let (first, second) = (draw(), draw());
    let in_box = first
        .iter()
        .all(|s| s.points().data().iter().all(|v| (0.0..=1.0).contains(v)));
    let same = first
        .iter()
        .zip(&second)
        .all(|(a, b)| a.encode() == b.encode());
    ok &= in_box && same;
    notes.push(format!("in [0,1] {in_box}, bit-identical reruns {same}"));

    finish(8, start, Duration::from_secs(60), ok, notes.join("; "));
}

#[test]
fn criterion_9_refinement_stability() {
    let start = Instant::now();
    let run = ip_run();
    let cfg = IpDetectConfig::default();
    let zoo = &run.outcome.zoo;
    let refs = &run.outcome.refset;
    let coarse = &run.outcome.matrix;
    let fine = distance_matrix(&zoo.fingerprints(refs, cfg.baseline, 128).unwrap()).unwrap();
    let n = coarse.len();
    let mut worst = (0.0f64, String::new());
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (coarse.get(i, j), fine.get(i, j));
            let rel = (a - b).abs() / b.max(1e-9);
            if rel > worst.0 {
                worst = (rel, format!("{} vs {}", coarse.ids[i], coarse.ids[j]));
            }
        }
    }
    finish(
        9,
        start,
        Duration::from_secs(15 * 60),
        worst.0 <= 0.02,
        format!(
            "{} pairs, worst relative change {:.2e} ({})",
            n * (n - 1) / 2,
            worst.0,
            worst.1
        ),
    );
}

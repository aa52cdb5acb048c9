mod common;

use common::{cubic_error, random_point, random_tanh_mlp};
use modelgif::gif::analytic::{HalfSquaredNorm, Linear};
use modelgif::gif::{completeness_residual, extract_curve};
use modelgif::Rng;

/// Max over samples of ‖g(t_s) − (t_s²/2)x₁‖ / ‖x₁‖ for the half squared
/// norm with a zero baseline.
fn half_norm_error(x1: &[f32], steps: usize) -> f64 {
    let field = HalfSquaredNorm { dim: x1.len() };
    let curve = extract_curve(&field, &vec![0.0; x1.len()], x1, steps).unwrap();
    let norm: f64 = x1.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
    (1..=steps)
        .map(|s| {
            let t = s as f64 / steps as f64;
            let err: f64 = curve
                .at(s)
                .iter()
                .zip(x1)
                .map(|(&g, &x)| (f64::from(g) - t * t / 2.0 * f64::from(x)).powi(2))
                .sum();
            err.sqrt() / norm
        })
        .fold(0.0, f64::max)
}

#[test]
fn half_squared_norm_matches_closed_form() {
    let mut rng = Rng::new(5);
    for _ in 0..10 {
        let x1 = random_point(&mut rng, 16);
        assert!(half_norm_error(&x1, 64) <= 1e-3);
    }
}

#[test]
fn midpoint_is_exact_for_a_field_linear_along_the_path() {
    let x1 = random_point(&mut Rng::new(6), 8);
    assert!(half_norm_error(&x1, 4) < 1e-6);
}

#[test]
fn midpoint_error_falls_quadratically() {
    let x1 = random_point(&mut Rng::new(6), 8);
    for s in [8, 16, 32, 64] {
        let ratio = cubic_error(&x1, s) / cubic_error(&x1, 2 * s);
        assert!(ratio >= 3.5, "S={s}: ratio {ratio}");
    }
}

#[test]
fn constant_field_integrates_exactly() {
    let field = Linear {
        weights: vec![0.5, -2.0, 3.0],
        bias: 1.0,
    };
    let curve = extract_curve(&field, &[0.1, 0.2, 0.3], &[0.9, 0.4, 0.0], 10).unwrap();
    for s in 1..=10 {
        let t = s as f32 / 10.0;
        for (g, w) in curve.at(s).iter().zip(&field.weights) {
            assert!((g - t * w).abs() < 1e-6);
        }
    }
    assert!(completeness_residual(&field, &curve).unwrap() < 1e-6);
}

#[test]
fn completeness_tightens_with_more_steps() {
    let mut rng = Rng::new(7);
    for _ in 0..5 {
        let model = random_tanh_mlp(&mut rng, 4);
        let x0 = random_point(&mut rng, 4);
        let x1 = random_point(&mut rng, 4);
        let r: Vec<f64> = [16, 64, 256]
            .iter()
            .map(|&s| {
                completeness_residual(&model, &extract_curve(&model, &x0, &x1, s).unwrap()).unwrap()
            })
            .collect();
        assert!(r[2] <= r[0] + 1e-6, "{r:?}");
    }
}

#[test]
fn too_few_steps_are_rejected() {
    let field = HalfSquaredNorm { dim: 2 };
    assert!(extract_curve(&field, &[0.0, 0.0], &[1.0, 1.0], 1).is_err());
}

mod common;

use common::{fd_gradient, forward_f64, random_point, random_tanh_mlp, scalar_f64};
use modelgif::{Activation, ArchSpec, Rng, Tensor};

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

#[test]
fn interpreter_agrees_with_library_forward() {
    let mut rng = Rng::new(1);
    for _ in 0..10 {
        let model = random_tanh_mlp(&mut rng, 6);
        let x = random_point(&mut rng, 6);
        let lib = model
            .logits(&Tensor::new(vec![1, 6], x.clone()).unwrap())
            .unwrap();
        let oracle = forward_f64(&model, &to_f64(&x));
        for (a, b) in lib.data().iter().zip(&oracle) {
            assert!((f64::from(*a) - b).abs() < 1e-5, "{a} vs {b}");
        }
        let s = model.evaluate_scalar(&Tensor::from_vec(x.clone())).unwrap();
        assert!((f64::from(s) - scalar_f64(&model, &to_f64(&x))).abs() < 1e-5);
    }
}

#[test]
fn tanh_mlp_gradients_match_central_differences() {
    let mut rng = Rng::new(2);
    for _ in 0..20 {
        let dim = 2 + rng.below(8);
        let model = random_tanh_mlp(&mut rng, dim);
        let x = random_point(&mut rng, dim);
        let g = model.input_gradient(&Tensor::from_vec(x.clone())).unwrap();
        let fd = fd_gradient(&model, &to_f64(&x), 1e-6);
        for (a, b) in g.data().iter().zip(&fd) {
            if b.abs() > 1e-4 {
                assert!((f64::from(*a) - b).abs() / b.abs() < 0.01, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn tanh_cnn_gradients_match_central_differences() {
    let arch = ArchSpec::Cnn {
        input_shape: vec![6, 6, 2],
        channels: vec![3],
        kernel: 3,
        hidden: 5,
        outputs: 3,
        activation: Activation::Tanh,
    };
    let mut rng = Rng::new(3);
    for _ in 0..3 {
        let model = arch.init(&mut rng).unwrap();
        let x = random_point(&mut rng, 72);
        let g = model
            .input_gradient(&Tensor::new(vec![6, 6, 2], x.clone()).unwrap())
            .unwrap();
        let fd = fd_gradient(&model, &to_f64(&x), 1e-6);
        let mut checked = 0;
        for (a, b) in g.data().iter().zip(&fd) {
            if b.abs() > 1e-4 {
                checked += 1;
                assert!((f64::from(*a) - b).abs() / b.abs() < 0.01, "{a} vs {b}");
            }
        }
        assert!(checked > 10);
    }
}

#[test]
fn batched_gradients_equal_single_queries() {
    let mut rng = Rng::new(4);
    let model = random_tanh_mlp(&mut rng, 5);
    let rows: Vec<Vec<f32>> = (0..4).map(|_| random_point(&mut rng, 5)).collect();
    let batch = model
        .input_gradient_batch(&Tensor::new(vec![4, 5], rows.concat()).unwrap())
        .unwrap();
    for (r, x) in rows.iter().enumerate() {
        let single = model.input_gradient(&Tensor::from_vec(x.clone())).unwrap();
        assert_eq!(batch.row(r), single.data());
    }
}

//! Trains a small tanh classifier, walks one gradient-field curve and checks
//! that the curve's endpoint attributes the change in the model's output.
//!
//! `cargo run --release --example gradient_field`

use modelgif::data::gaussian_blobs;
use modelgif::gif::{completeness_residual, extract_curve, GradientField};
use modelgif::zoo::{self, TrainConfig};
use modelgif::{Activation, ArchSpec, Tensor};

fn main() -> modelgif::Result<()> {
    let data = gaussian_blobs(200, 0.08, 1);
    let arch = ArchSpec::mlp(vec![2], vec![16], 2, Activation::Tanh);
    let model = zoo::train(&arch, &data, &TrainConfig::new(100, 0.1, 16, 3))?;
    println!("train accuracy {:.3}", zoo::accuracy(&model, &data)?);

    let x1 = [0.9f32, 0.8];
    let grad = model.input_gradient(&Tensor::from_vec(x1.to_vec()))?;
    println!("gradient of the logit norm at {x1:?}: {:?}", grad.data());

    let x0 = [0.0f32, 0.0];
    for steps in [8, 64, 512] {
        let curve = extract_curve(&model, &x0, &x1, steps)?;
        let values = model.values(&Tensor::new(vec![2, 2], [x0, x1].concat())?)?;
        println!(
            "S={steps:<4} g(1)={:?}  residual={:.2e}  |M(x1)-M(x0)|={:.4}",
            curve.end(),
            completeness_residual(&model, &curve)?,
            (values[1] - values[0]).abs()
        );
    }
    Ok(())
}

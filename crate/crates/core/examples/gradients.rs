//! Gradient operators and the per-image regularization on a synthetic scene.
//!
//! Run with `cargo run --example gradients`.

use gradfield::image::{
    compute_gradient, regularize_gradient, save_image_auto, GradientOperator, GrayImage,
};
use gradfield::synth::textured_scene;

fn main() -> gradfield::Result<()> {
    let img = textured_scene(96, 64, 11);
    for op in [
        GradientOperator::CentralDifference,
        GradientOperator::Scharr,
    ] {
        let g = regularize_gradient(compute_gradient(&img, op)?);
        let max_rnorm = g.rnorms().iter().cloned().fold(0.0, f64::max);
        println!(
            "{op:?}: eps = {:.3e}, largest |a| = {max_rnorm:.4}",
            g.epsilon()
        );
    }

    // A brighter copy has a larger raw gradient but the same regularized one.
    let bright = img.map(|v| 1.5 * v + 0.1);
    let a = regularize_gradient(compute_gradient(&img, GradientOperator::Scharr)?);
    let b = regularize_gradient(compute_gradient(&bright, GradientOperator::Scharr)?);
    let diff = a
        .rgx()
        .iter()
        .zip(b.rgx())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("max |a_x(I) - a_x(1.5 I + 0.1)| = {diff:.2e}");

    let out = std::env::temp_dir().join("gradfield_rnorm.pgm");
    save_image_auto(&GrayImage::new(96, 64, a.rnorms().to_vec())?, &out)?;
    println!("regularized magnitude written to {}", out.display());
    Ok(())
}

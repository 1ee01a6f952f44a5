//! Every dissimilarity at one pixel pair, plus the scaled-gradient behaviour
//! under a pure gradient scaling.
//!
//! Run with `cargo run --example metrics_catalog`.

use gradfield::image::{GradientOperator, Point};
use gradfield::metrics::{
    pixel_residual, residual, windowed_cost, ImageFields, MetricContext, MetricKind, MetricParams,
    PixelSample,
};
use gradfield::synth::textured_scene;

fn sample_with(a: [f64; 2]) -> PixelSample {
    let a_norm = a[0].hypot(a[1]);
    PixelSample {
        intensity: 0.5,
        g: a,
        g_norm: a_norm,
        a,
        a_norm,
        scale: 1.0,
    }
}

fn main() -> gradfield::Result<()> {
    let left = textured_scene(64, 48, 5);
    // Left pixel x shows up at x - 2 on the right.
    let right = left.shifted(-2, 0);
    let fi = ImageFields::new(left, GradientOperator::Scharr)?;
    let fj = ImageFields::new(right, GradientOperator::Scharr)?;
    let ctx = MetricContext::new(&fi, &fj);
    let params = MetricParams::with_window(5);
    let ui = Point::new(30.0, 20.0);
    let matched = ui.offset(-2.0, 0.0);

    println!(
        "{:>6} {:>12} {:>12} {:>12}",
        "kind", "pixel d=2", "window d=0", "window d=2"
    );
    for kind in MetricKind::ALL {
        let pixel = if kind.is_window_only() {
            "-".to_string()
        } else {
            format!("{:.5}", residual(kind, &ctx, ui, matched, &params)?.l1())
        };
        let w0 = windowed_cost(kind, &ctx, ui, ui, &params)?;
        let w2 = windowed_cost(kind, &ctx, ui, matched, &params)?;
        println!("{:>6} {pixel:>12} {w0:>12.5} {w2:>12.5}", kind.name());
    }

    // A stronger edge of the same orientation lowers the unsigned cost but
    // raises the scaled one above its self-match value of zero.
    let a = [0.12, 0.16];
    let si = sample_with(a);
    for c in [1.0, 1.5, 2.0, 4.0] {
        let sj = sample_with([c * a[0], c * a[1]]);
        let p = MetricParams::default();
        let ugf = pixel_residual(MetricKind::Ugf, &si, &sj, &p).l1();
        let sgf = pixel_residual(MetricKind::Sgf, &si, &sj, &p).l1();
        println!("c = {c}: ugf {ugf:.4}, sgf {sgf:.4}");
    }
    Ok(())
}

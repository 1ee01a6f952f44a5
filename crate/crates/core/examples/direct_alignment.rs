//! Coarse-to-fine alignment of a translated image, with and without an
//! exposure change on the current frame.
//!
//! Run with `cargo run --release --example direct_alignment`.

use gradfield::align::{align, trace_csv, AlignConfig, WarpModel};
use gradfield::metrics::MetricKind;
use gradfield::synth::smooth_random;

fn main() -> gradfield::Result<()> {
    let truth = [3.7, -2.1];
    let reference = smooth_random(128, 128, 3.0, 1);
    let current = reference.translated(truth[0], truth[1]);
    let brighter = current.map(|v| 1.3 * v);

    for (label, cur) in [("clean", &current), ("gain 1.3", &brighter)] {
        for kind in [MetricKind::Photo, MetricKind::Sgf, MetricKind::Sgf3] {
            let r = align(
                &reference,
                cur,
                &AlignConfig::for_kind(kind),
                WarpModel::default(),
            )?;
            let t = r.warp.offset();
            let err = (t[0] - truth[0]).hypot(t[1] - truth[1]);
            println!(
                "{label:>8} {:>5}: t = ({:.3}, {:.3}), error {err:.3} px, converged {}, iterations {:?}",
                kind.name(),
                t[0],
                t[1],
                r.converged,
                r.iterations_per_level
            );
        }
    }

    let affine = align(
        &reference,
        &current,
        &AlignConfig::for_kind(MetricKind::Sgf3),
        WarpModel::affine_identity(),
    )?;
    println!("affine fit: {:?}", affine.warp.params());
    let trace = trace_csv(&affine.trace);
    println!(
        "first trace lines:\n{}",
        trace.lines().take(4).collect::<Vec<_>>().join("\n")
    );
    Ok(())
}

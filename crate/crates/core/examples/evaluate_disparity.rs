//! Ground-truth evaluation with both invalid-pixel policies, reading a
//! KITTI-style 16-bit PNG and a PFM.
//!
//! Run with `cargo run --example evaluate_disparity`.

use gradfield::eval::{disparity_stats, stats_row, InvalidPolicy, STATS_HEADER};
use gradfield::stereo::{read_disparity, DisparityMap};

fn main() -> gradfield::Result<()> {
    let (w, h) = (40, 30);
    let gt = DisparityMap::new(
        w,
        h,
        (0..w * h)
            .map(|i| {
                if i % 17 == 0 {
                    f64::NAN
                } else {
                    10.0 + (i % w) as f64 / 8.0
                }
            })
            .collect(),
    )?;
    let est = DisparityMap::new(
        w,
        h,
        gt.values()
            .iter()
            .enumerate()
            .map(|(i, &g)| match i % 11 {
                0 => f64::NAN,
                1 => g + 3.0,
                _ => g + 0.25,
            })
            .collect(),
    )?;

    let dir = std::env::temp_dir();
    gt.save_auto(dir.join("gradfield_gt.png"))?;
    est.save_auto(dir.join("gradfield_est.pfm"))?;
    let gt = read_disparity(dir.join("gradfield_gt.png"))?;
    let est = read_disparity(dir.join("gradfield_est.pfm"))?;

    println!("{STATS_HEADER}");
    for (label, policy) in [
        ("excluded", InvalidPolicy::Excluded),
        ("max-error", InvalidPolicy::MaxError),
    ] {
        println!("{}", stats_row(label, &disparity_stats(&est, &gt, policy)?));
    }
    Ok(())
}

//! Block matching on a pair shifted by a known disparity, then error
//! statistics and disparity export.
//!
//! Run with `cargo run --release --example stereo_matching`.

use gradfield::eval::{disparity_stats, stats_csv, InvalidPolicy};
use gradfield::metrics::MetricKind;
use gradfield::stereo::{match_pair, read_disparity, DisparityMap, StereoConfig};
use gradfield::synth::noise_texture;

fn main() -> gradfield::Result<()> {
    let left = noise_texture(128, 96, 3);
    // Right pixel x shows left pixel x + 7, so the true disparity is 7.
    let right = left.shifted(-7, 0);
    let gt = DisparityMap::new(128, 96, vec![7.0; 128 * 96])?;

    let mut rows = Vec::new();
    for kind in [
        MetricKind::Sad,
        MetricKind::Pm,
        MetricKind::Ugf,
        MetricKind::Sgf,
        MetricKind::Sgf3,
    ] {
        let cfg = StereoConfig {
            lr_check: true,
            ..StereoConfig::new(kind, 5, 0, 19)
        };
        let disp = match_pair(&left, &right, &cfg)?;
        rows.push((
            kind.name(),
            disparity_stats(&disp, &gt, InvalidPolicy::Excluded)?,
        ));
        if kind == MetricKind::Sgf {
            let pfm = std::env::temp_dir().join("gradfield_sgf.pfm");
            let png = std::env::temp_dir().join("gradfield_sgf.png");
            disp.save_auto(&pfm)?;
            disp.save_auto(&png)?;
            let back = read_disparity(&png)?;
            println!(
                "wrote {} and {} ({} of {} pixels valid after reload)",
                pfm.display(),
                png.display(),
                back.valid_count(),
                128 * 96
            );
        }
    }
    print!("{}", stats_csv(rows.iter().map(|(k, s)| (*k, s))));
    Ok(())
}

//! Disparity error statistics and the two metric-comparison experiments:
//! stereo under a photometric perturbation at zero true disparity, and the
//! strong/weak edge cost-curve study.

mod toy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use toy::{
    curve_argmin, local_minima, run_toy_edge_experiment, ToyEdgeConfig, ToyEdgeResult, TOY_KINDS,
};

use crate::error::{Error, Result};
use crate::image::{apply_perturbation, GrayImage, PerturbationSpec};
use crate::metrics::MetricKind;
use crate::stereo::{match_pair, DisparityMap, StereoConfig};

/// How estimates marked invalid enter the error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidPolicy {
    /// Reported only through `invalid_pct`.
    #[default]
    Excluded,
    /// Counted as infinitely wrong: bad at every threshold, infinite mean.
    MaxError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityStats {
    pub mean_error: f64,
    pub bad1: f64,
    pub bad2: f64,
    pub bad4: f64,
    pub invalid_pct: f64,
    pub evaluated_count: usize,
    /// No pixel was evaluated; the mean and bad percentages are then 0.
    pub empty: bool,
}

/// Compares an estimate with ground truth. Pixels with invalid ground truth
/// are ignored entirely.
pub fn disparity_stats(
    est: &DisparityMap,
    gt: &DisparityMap,
    policy: InvalidPolicy,
) -> Result<DisparityStats> {
    if (est.width(), est.height()) != (gt.width(), gt.height()) {
        return Err(Error::Dimension(format!(
            "estimate is {}x{}, ground truth is {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut gt_valid = 0usize;
    let mut invalid = 0usize;
    let mut errors = Vec::new();
    for (&e, &g) in est.values().iter().zip(gt.values()) {
        if g.is_nan() {
            continue;
        }
        gt_valid += 1;
        if e.is_nan() {
            invalid += 1;
            if policy == InvalidPolicy::MaxError {
                errors.push(f64::INFINITY);
            }
        } else {
            errors.push((e - g).abs());
        }
    }
    let n = errors.len();
    let pct = |count: usize, of: usize| {
        if of == 0 {
            0.0
        } else {
            100.0 * count as f64 / of as f64
        }
    };
    let bad = |t: f64| pct(errors.iter().filter(|&&e| e > t).count(), n);
    Ok(DisparityStats {
        mean_error: if n == 0 {
            0.0
        } else {
            errors.iter().sum::<f64>() / n as f64
        },
        bad1: bad(1.0),
        bad2: bad(2.0),
        bad4: bad(4.0),
        invalid_pct: pct(invalid, gt_valid),
        evaluated_count: n,
        empty: n == 0,
    })
}

pub const STATS_HEADER: &str = "metric,mean,bad1,bad2,bad4,invalid_pct";

/// One CSV line (no newline) for a labelled statistics row.
pub fn stats_row(label: &str, s: &DisparityStats) -> String {
    format!(
        "{label},{:.6},{:.4},{:.4},{:.4},{:.4}",
        s.mean_error, s.bad1, s.bad2, s.bad4, s.invalid_pct
    )
}

pub fn stats_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a DisparityStats)>) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for (label, s) in rows {
        out.push_str(&stats_row(label, s));
        out.push('\n');
    }
    out
}

/// Kinds compared in the perturbation experiment, in report order.
pub const PERTURBATION_KINDS: [MetricKind; 7] = [
    MetricKind::Photo,
    MetricKind::Ugf,
    MetricKind::Ncc,
    MetricKind::Mag,
    MetricKind::Gom,
    MetricKind::Pm,
    MetricKind::Sgf,
];

/// Vignetting of strength 0.3 combined with an exposure gain of 1.2.
pub fn robustness_perturbation() -> PerturbationSpec {
    PerturbationSpec {
        vignette_strength: 0.3,
        exposure_gain: 1.2,
        ..PerturbationSpec::identity()
    }
}

/// Matching setup of the perturbation experiment: window 3, candidates
/// 0..=19, plain winner-takes-all without validity filters.
pub fn perturbation_stereo_config() -> StereoConfig {
    StereoConfig {
        uniqueness_ratio: 1.0,
        lr_check: false,
        subpixel: false,
        ..StereoConfig::new(MetricKind::Photo, 3, 0, 19)
    }
}

/// Matches `img` against its perturbed copy with each kind. The true
/// disparity is 0 everywhere, so `mean_error` is the mean `|d*|`.
pub fn run_perturbation_experiment(
    img: &GrayImage,
    spec: &PerturbationSpec,
    kinds: &[MetricKind],
    cfg: &StereoConfig,
) -> Result<Vec<(MetricKind, DisparityStats)>> {
    let perturbed = apply_perturbation(img, spec)?;
    let gt = DisparityMap::new(
        img.width(),
        img.height(),
        vec![0.0; img.width() * img.height()],
    )?;
    kinds
        .par_iter()
        .map(|&kind| {
            let c = StereoConfig {
                kind,
                ..cfg.clone()
            };
            let est = match_pair(img, &perturbed, &c)?;
            Ok((kind, disparity_stats(&est, &gt, InvalidPolicy::Excluded)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> DisparityMap {
        DisparityMap::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_maps() {
        let m = map(&[1.0, 2.0, 3.0]);
        let s = disparity_stats(&m, &m, InvalidPolicy::Excluded).unwrap();
        assert_eq!(
            (s.mean_error, s.bad1, s.bad2, s.bad4, s.invalid_pct),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(s.evaluated_count, 3);
    }

    #[test]
    fn two_pixel_counts() {
        let s = disparity_stats(
            &map(&[1.5, 6.0]),
            &map(&[1.0, 3.0]),
            InvalidPolicy::Excluded,
        )
        .unwrap();
        assert_eq!(s.mean_error, 1.75);
        assert_eq!((s.bad1, s.bad2, s.bad4), (50.0, 50.0, 0.0));
    }

    #[test]
    fn all_invalid_is_flagged_empty() {
        let s = disparity_stats(
            &map(&[f64::NAN, f64::NAN]),
            &map(&[1.0, 2.0]),
            InvalidPolicy::Excluded,
        )
        .unwrap();
        assert_eq!(s.invalid_pct, 100.0);
        assert_eq!(s.evaluated_count, 0);
        assert_eq!(s.mean_error, 0.0);
        assert!(s.empty);
    }

    #[test]
    fn max_error_policy_counts_invalid_as_bad() {
        let est = map(&[1.0, f64::NAN, 2.0, 5.0]);
        let gt = map(&[1.0, 1.0, f64::NAN, 5.5]);
        let s = disparity_stats(&est, &gt, InvalidPolicy::MaxError).unwrap();
        assert_eq!(s.evaluated_count, 3);
        assert!((s.bad1 - 100.0 / 3.0).abs() < 1e-12 && s.bad4 == s.bad1);
        assert!(s.mean_error.is_infinite());
        assert!((s.invalid_pct - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let s = disparity_stats(
            &map(&[1.5, 6.0]),
            &map(&[1.0, 3.0]),
            InvalidPolicy::Excluded,
        )
        .unwrap();
        let csv = stats_csv([("sgf", &s)]);
        assert_eq!(
            csv,
            "metric,mean,bad1,bad2,bad4,invalid_pct\nsgf,1.750000,50.0000,50.0000,0.0000,0.0000\n"
        );
    }

    #[test]
    fn identity_perturbation_gives_zero_disparity() {
        let img = crate::synth::textured_scene(48, 32, 3);
        let rows = run_perturbation_experiment(
            &img,
            &PerturbationSpec::identity(),
            &PERTURBATION_KINDS,
            &perturbation_stereo_config(),
        )
        .unwrap();
        // Ugf's self-match cost 1 - |a|^2 is not its minimum: a stronger
        // parallel edge nearby scores lower.
        for (kind, s) in rows.into_iter().filter(|(k, _)| *k != MetricKind::Ugf) {
            assert_eq!(s.mean_error, 0.0, "{kind}");
        }
    }

    #[test]
    fn gain_only_leaves_sgf_exact() {
        let img = crate::synth::textured_scene(48, 32, 4);
        let spec = PerturbationSpec {
            exposure_gain: 1.4,
            ..PerturbationSpec::identity()
        };
        let rows = run_perturbation_experiment(
            &img,
            &spec,
            &[MetricKind::Sgf],
            &perturbation_stereo_config(),
        )
        .unwrap();
        assert_eq!(rows[0].1.mean_error, 0.0);
    }
}

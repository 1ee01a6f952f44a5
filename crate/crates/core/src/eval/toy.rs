use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GradientOperator;
use crate::metrics::{MetricKind, MetricParams};
use crate::stereo::{cost_curve, StereoConfig};
use crate::synth::{add_noise, two_box_scene, TwoBoxLayout};

/// Kinds whose curves the edge study reports.
pub const TOY_KINDS: [MetricKind; 4] = [
    MetricKind::Ugf,
    MetricKind::Mag,
    MetricKind::Sgf,
    MetricKind::Photo,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyEdgeConfig {
    pub strong_amplitude: f64,
    pub weak_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub window: usize,
    pub operator: GradientOperator,
    /// Shift sweep, inclusive on both ends.
    pub min_shift: i32,
    pub max_shift: i32,
}

impl Default for ToyEdgeConfig {
    fn default() -> Self {
        Self {
            strong_amplitude: 0.6,
            weak_amplitude: 0.15,
            noise_sigma: 0.0,
            seed: 0,
            window: 3,
            operator: GradientOperator::Scharr,
            min_shift: -40,
            max_shift: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEdgeResult {
    pub layout: TwoBoxLayout,
    /// Shift at which the reference patch matches itself.
    pub true_shift: i32,
    /// Shift that lands on the strong box's rising edge.
    pub strong_shift: i32,
    pub curves: Vec<(MetricKind, Vec<(i32, f64)>)>,
}

impl ToyEdgeResult {
    pub fn curve(&self, kind: MetricKind) -> Option<&[(i32, f64)]> {
        self.curves
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, c)| c.as_slice())
    }

    pub fn argmin(&self, kind: MetricKind) -> Option<i32> {
        self.curve(kind).and_then(curve_argmin)
    }

    /// `d` followed by one cost column per kind.
    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self.curves.iter().map(|(k, _)| k.name()).collect();
        let mut out = format!("d,{}\n", names.join(","));
        let Some((_, first)) = self.curves.first() else {
            return out;
        };
        for (row, (d, _)) in first.iter().enumerate() {
            out.push_str(&d.to_string());
            for (_, c) in &self.curves {
                out.push_str(&format!(",{}", c[row].1));
            }
            out.push('\n');
        }
        out
    }
}

/// Shift of the smallest cost; ties go to the smallest `|d|`, then the
/// smaller `d`.
pub fn curve_argmin(curve: &[(i32, f64)]) -> Option<i32> {
    curve
        .iter()
        .filter(|(_, c)| c.is_finite())
        .min_by(|(da, a), (db, b)| {
            a.total_cmp(b)
                .then(da.abs().cmp(&db.abs()))
                .then(da.cmp(db))
        })
        .map(|(d, _)| *d)
}

/// Strict local minima of a curve. A run of equal costs counts once (at its
/// first shift) when both neighbouring runs are higher; runs touching either
/// end of the curve are not counted.
pub fn local_minima(curve: &[(i32, f64)]) -> Vec<i32> {
    let mut runs: Vec<(i32, f64)> = Vec::new();
    for &(d, c) in curve {
        if runs.last().is_none_or(|&(_, last)| last != c) {
            runs.push((d, c));
        }
    }
    runs.windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1)
        .map(|w| w[1].0)
        .collect()
}

/// Cost curves of a patch on the weak box's rising edge against horizontally
/// shifted patches of the same image.
///
/// The scene holds a strong and a weak box of equal orientation. The patch
/// matches itself at shift 0 and the strong box's rising edge at
/// `weak_x - strong_x`; the weak box's falling edge lies at `-box_width`.
pub fn run_toy_edge_experiment(cfg: &ToyEdgeConfig) -> Result<ToyEdgeResult> {
    if !(cfg.weak_amplitude > 0.0 && cfg.strong_amplitude >= cfg.weak_amplitude) {
        return Err(Error::Param(format!(
            "need 0 < weak <= strong amplitude, got weak {} strong {}",
            cfg.weak_amplitude, cfg.strong_amplitude
        )));
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(Error::Param("noise sigma must be non-negative".into()));
    }
    let layout = TwoBoxLayout::default();
    let scene = add_noise(
        &two_box_scene(&layout, cfg.strong_amplitude, cfg.weak_amplitude),
        cfg.noise_sigma,
        cfg.seed,
    );
    let u = (layout.weak_x, layout.height / 2);
    let curves = TOY_KINDS
        .par_iter()
        .map(|&kind| {
            let stereo = StereoConfig {
                kind,
                params: MetricParams::with_window(cfg.window),
                operator: cfg.operator,
                min_disparity: cfg.min_shift,
                max_disparity: cfg.max_shift,
                ..StereoConfig::default()
            };
            // A patch at `x` compared with the one at `x - d` of the same image.
            Ok((kind, cost_curve(&scene, &scene, &stereo, u)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyEdgeResult {
        layout,
        true_shift: 0,
        strong_shift: layout.weak_x as i32 - layout.strong_x as i32,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_tie_break() {
        assert_eq!(
            curve_argmin(&[(-3, 1.0), (2, 0.5), (-2, 0.5), (5, 0.7)]),
            Some(-2)
        );
        assert_eq!(curve_argmin(&[(0, f64::INFINITY)]), None);
    }

    #[test]
    fn plateau_minima_count_once() {
        let c: Vec<(i32, f64)> = [3.0, 1.0, 1.0, 2.0, 0.5, 4.0, 4.0, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as i32, v))
            .collect();
        assert_eq!(local_minima(&c), vec![1, 4]);
    }

    #[test]
    fn equal_boxes_prefer_the_nearer_match() {
        let cfg = ToyEdgeConfig {
            strong_amplitude: 0.3,
            weak_amplitude: 0.3,
            ..ToyEdgeConfig::default()
        };
        let r = run_toy_edge_experiment(&cfg).unwrap();
        for kind in TOY_KINDS {
            assert_eq!(r.argmin(kind), Some(0), "{kind}");
        }
    }

    #[test]
    fn rejects_bad_amplitudes() {
        let cfg = ToyEdgeConfig {
            strong_amplitude: 0.1,
            weak_amplitude: 0.3,
            ..ToyEdgeConfig::default()
        };
        assert!(matches!(
            run_toy_edge_experiment(&cfg),
            Err(Error::Param(_))
        ));
    }
}

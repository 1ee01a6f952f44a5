//! Seeded analytic-vs-numeric Jacobian comparison on a smooth random pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::residual::branch_signature;
use super::{
    jacobian_fd, jacobian_ui, relative_error, ImageFields, MetricContext, MetricKind, MetricParams,
};
use crate::error::{Error, Result};
use crate::image::{GradientOperator, Point};
use crate::synth::smooth_random;

/// Kinds compared by default.
pub const CHECKED_KINDS: [MetricKind; 5] = [
    MetricKind::Photo,
    MetricKind::Ugf,
    MetricKind::Sgf,
    MetricKind::Sgf2,
    MetricKind::Sgf3,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianCheckConfig {
    pub width: usize,
    pub height: usize,
    /// Blur of the random images. The central-difference truncation error
    /// grows like `(step / sigma)^2`.
    pub sigma: f64,
    pub samples: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Locations with a weaker gradient in image `i` are skipped.
    pub min_gradient: f64,
    pub seed: u64,
    pub operator: GradientOperator,
}

impl Default for JacobianCheckConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            sigma: 24.0,
            samples: 200,
            step: 0.25,
            tolerance: 1e-3,
            min_gradient: 0.01,
            seed: 7,
            operator: GradientOperator::CentralDifference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianSample {
    pub at: Point,
    pub analytic: [f64; 2],
    pub numeric: [f64; 2],
    pub rel_error: f64,
    /// The difference stencil crosses a `max`/`abs` switch, so the numeric
    /// value mixes two one-sided slopes.
    pub straddles_branch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindCheck {
    pub kind: MetricKind,
    pub samples: Vec<JacobianSample>,
    pub tolerance: f64,
}

impl KindCheck {
    pub fn passed(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.rel_error < self.tolerance)
            .count()
    }

    pub fn pass_fraction(&self) -> f64 {
        self.passed() as f64 / self.samples.len().max(1) as f64
    }

    pub fn worst(&self) -> Option<&JacobianSample> {
        self.samples
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// Worst sample among those whose stencil stays on one branch.
    pub fn worst_smooth(&self) -> Option<&JacobianSample> {
        self.samples
            .iter()
            .filter(|s| !s.straddles_branch)
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// Samples over the tolerance that cannot be blamed on a branch switch.
    pub fn smooth_failures(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| !s.straddles_branch && s.rel_error >= self.tolerance)
            .count()
    }
}

/// Compares analytic and central-difference Jacobians of each kind.
///
/// Images `i` and `j` are independent smooth random fields (seeds `seed` and
/// `seed + 1`) and `u_j = u_i`. Samples sit at the centres of interpolation
/// cells, `(x + 0.5, y + 0.5)`, so every difference stencil stays inside one
/// bilinear cell where the residual is smooth; on the pixel lattice itself the
/// interpolant has a kink and a finite step only sees averaged slopes.
pub fn check_jacobians(
    kinds: &[MetricKind],
    config: &JacobianCheckConfig,
) -> Result<Vec<KindCheck>> {
    if config.step <= 0.0 || config.step >= 0.5 {
        return Err(Error::Param(format!(
            "step must lie in (0, 0.5) to stay inside a cell, got {}",
            config.step
        )));
    }
    if config.width < 12 || config.height < 12 {
        return Err(Error::Dimension(
            "jacobian check needs at least 12x12 images".into(),
        ));
    }
    let fi = ImageFields::new(
        smooth_random(config.width, config.height, config.sigma, config.seed),
        config.operator,
    )?;
    let fj = ImageFields::new(
        smooth_random(
            config.width,
            config.height,
            config.sigma,
            config.seed.wrapping_add(1),
        ),
        config.operator,
    )?;
    let ctx = MetricContext::new(&fi, &fj);
    let params = MetricParams::default();

    // Locations are drawn once and shared by all kinds.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points = Vec::with_capacity(config.samples);
    let max_draws = config.samples.saturating_mul(1000).max(1000);
    for _ in 0..max_draws {
        if points.len() == config.samples {
            break;
        }
        let p = Point::new(
            rng.random_range(3..config.width - 4) as f64 + 0.5,
            rng.random_range(3..config.height - 4) as f64 + 0.5,
        );
        let s = fi.sample(p).expect("interior point");
        if s.g_norm > config.min_gradient {
            points.push(p);
        }
    }
    if points.len() < config.samples {
        return Err(Error::Param(format!(
            "only {} of {} locations exceed the gradient threshold {}",
            points.len(),
            config.samples,
            config.min_gradient
        )));
    }

    kinds
        .iter()
        .map(|&kind| {
            let samples = points
                .iter()
                .map(|&p| {
                    let analytic = jacobian_ui(kind, &ctx, p, p, &params)?;
                    let numeric = jacobian_fd(kind, &ctx, p, p, &params, config.step)?;
                    let sj = fj.sample(p).expect("interior point");
                    let signature = |q: Point| {
                        branch_signature(kind, &fi.sample(q).expect("interior point"), &sj, &params)
                    };
                    let h = config.step;
                    let centre = signature(p);
                    let straddles_branch = [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)]
                        .iter()
                        .any(|&(dx, dy)| signature(p.offset(dx, dy)) != centre);
                    Ok(JacobianSample {
                        at: p,
                        analytic,
                        numeric,
                        rel_error: relative_error(analytic, numeric, 1e-12),
                        straddles_branch,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KindCheck {
                kind,
                samples,
                tolerance: config.tolerance,
            })
        })
        .collect()
}

//! Direct alignment of two images under a parametric warp.
//!
//! Reference pixels `p` are compared with the current image at `W(p)`; the
//! residual of the chosen metric is minimized by forward-additive
//! Gauss-Newton with Huber reweighting, coarse to fine. The current image is
//! the differentiated one, so metric Jacobians chain straight into
//! `dW/dtheta`.

mod warp;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use warp::{WarpModel, MIN_DETERMINANT};

use crate::error::{Error, Result};
use crate::image::{build_pyramid, compute_gradient, GradientOperator, GrayImage, Point};
use crate::metrics::jacobian_from_samples;
use crate::metrics::{pixel_residual, ImageFields, MetricContext, MetricKind, MetricParams};

/// Pixels closer than this to the border are never selected.
pub const SELECTION_BORDER: usize = 3;
/// Fewest points an alignment level may use.
pub const MIN_POINTS: usize = 12;
/// Warped locations must keep this distance from the current image border.
const WARP_MARGIN: f64 = 2.0;
/// Points per parallel accumulation chunk; fixed so sums do not depend on
/// the worker count.
const CHUNK: usize = 256;
/// Damping used when the undamped system is singular or its step is rejected.
const LM_LAMBDA: f64 = 1e-4;
const MAX_DAMPING_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointSelection {
    /// Pixels with gradient norm above the threshold.
    AllGradientAbove(f64),
    /// Every n-th pixel in both directions.
    GridStride(usize),
}

/// Pixels compared around each selected point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Patch {
    #[default]
    Single,
    Square3,
}

impl Patch {
    fn offsets(self) -> &'static [(f64, f64)] {
        const SQUARE: [(f64, f64); 9] = [
            (-1.0, -1.0),
            (0.0, -1.0),
            (1.0, -1.0),
            (-1.0, 0.0),
            (0.0, 0.0),
            (1.0, 0.0),
            (-1.0, 1.0),
            (0.0, 1.0),
            (1.0, 1.0),
        ];
        match self {
            Patch::Single => &SQUARE[4..5],
            Patch::Square3 => &SQUARE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub kind: MetricKind,
    pub params: MetricParams,
    pub operator: GradientOperator,
    pub huber_delta: f64,
    pub max_iterations: usize,
    /// Stop a level once the parameter update norm drops below this.
    pub convergence_epsilon: f64,
    pub pyramid_levels: usize,
    pub point_selection: PointSelection,
    pub patch: Patch,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self::for_kind(MetricKind::Sgf)
    }
}

impl AlignConfig {
    /// Defaults for `kind`; intensity residuals get a tighter Huber threshold.
    pub fn for_kind(kind: MetricKind) -> Self {
        Self {
            kind,
            params: MetricParams::default(),
            operator: GradientOperator::Scharr,
            huber_delta: default_huber_delta(kind),
            max_iterations: 50,
            convergence_epsilon: 1e-4,
            pyramid_levels: 4,
            point_selection: PointSelection::AllGradientAbove(0.01),
            patch: Patch::Single,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if matches!(
            self.kind,
            MetricKind::Gn | MetricKind::Ncc | MetricKind::Gom
        ) {
            return Err(Error::Kind {
                kind: self.kind,
                reason: "alignment needs a scalar pixel residual with a Jacobian",
            });
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config(format!(
                "huber delta must be positive, got {}",
                self.huber_delta
            )));
        }
        if !(self.convergence_epsilon > 0.0) {
            return Err(Error::Config("convergence epsilon must be positive".into()));
        }
        if self.pyramid_levels == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "pyramid levels and iterations must be at least 1".into(),
            ));
        }
        match self.point_selection {
            PointSelection::AllGradientAbove(t) if !(t >= 0.0) => Err(Error::Config(format!(
                "gradient threshold must be non-negative, got {t}"
            ))),
            PointSelection::GridStride(0) => {
                Err(Error::Config("grid stride must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn default_huber_delta(kind: MetricKind) -> f64 {
    if matches!(kind, MetricKind::Photo | MetricKind::Sad) {
        0.03
    } else {
        0.1
    }
}

/// Huber loss on a squared residual `s = e^2`.
#[inline]
pub fn huber_rho(s: f64, delta: f64) -> f64 {
    if s <= delta * delta {
        s
    } else {
        2.0 * delta * s.sqrt() - delta * delta
    }
}

/// IRLS weight `min(1, delta / |e|)`.
#[inline]
pub fn huber_weight(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

/// One Gauss-Newton iteration as it happened.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub level: usize,
    /// Objective before and after the step, both over the residuals valid at
    /// either parameter value.
    pub cost_before: f64,
    pub cost_after: f64,
    pub update_norm: f64,
    pub accepted: bool,
    pub residuals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub warp: WarpModel,
    pub converged: bool,
    /// Coarsest level first.
    pub iterations_per_level: Vec<usize>,
    pub final_cost: f64,
    pub inlier_fraction: f64,
    pub trace: Vec<IterationRecord>,
}

/// Reference pixels to align, at least [`SELECTION_BORDER`] pixels inside.
pub fn select_points(reference: &GrayImage, cfg: &AlignConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    let (w, h) = reference.dimensions();
    let b = SELECTION_BORDER;
    let mut out = Vec::new();
    if w > 2 * b && h > 2 * b {
        match cfg.point_selection {
            PointSelection::GridStride(n) => {
                for y in (b..h - b).step_by(n) {
                    for x in (b..w - b).step_by(n) {
                        out.push((x, y));
                    }
                }
            }
            PointSelection::AllGradientAbove(t) => {
                let grad = compute_gradient(reference, cfg.operator)?;
                for y in b..h - b {
                    for x in b..w - b {
                        if grad.norm_at(x, y) > t {
                            out.push((x, y));
                        }
                    }
                }
            }
        }
    }
    if out.len() < MIN_POINTS {
        return Err(Error::EmptySelection {
            found: out.len(),
            required: MIN_POINTS,
        });
    }
    Ok(out)
}

/// One pyramid level ready for optimization.
struct Level {
    reference: ImageFields,
    current: ImageFields,
    /// Reference pixel of every patch sample.
    samples: Vec<(usize, usize)>,
}

impl Level {
    fn new(reference: &GrayImage, current: &GrayImage, cfg: &AlignConfig) -> Result<Self> {
        let points = select_points(reference, cfg)?;
        let samples = points
            .iter()
            .flat_map(|&(x, y)| {
                cfg.patch
                    .offsets()
                    .iter()
                    .map(move |&(dx, dy)| ((x as f64 + dx) as usize, (y as f64 + dy) as usize))
            })
            .collect();
        Ok(Self {
            reference: ImageFields::new(reference.clone(), cfg.operator)?,
            current: ImageFields::new(current.clone(), cfg.operator)?,
            samples,
        })
    }

    fn ctx(&self) -> MetricContext<'_> {
        MetricContext::new(&self.current, &self.reference)
    }

    fn in_domain(&self, q: Point) -> bool {
        let max_x = self.current.width() as f64 - 1.0 - WARP_MARGIN;
        let max_y = self.current.height() as f64 - 1.0 - WARP_MARGIN;
        q.x >= WARP_MARGIN && q.y >= WARP_MARGIN && q.x <= max_x && q.y <= max_y
    }

    /// Residual of every sample; `None` where the warp leaves the domain.
    fn residuals(&self, warp: &WarpModel, cfg: &AlignConfig) -> Vec<Option<f64>> {
        self.samples
            .par_iter()
            .map(|&(x, y)| {
                let q = warp.apply(Point::new(x as f64, y as f64));
                if !self.in_domain(q) {
                    return None;
                }
                let si = self.current.sample(q)?;
                let sj = self.reference.sample_at(x, y);
                pixel_residual(cfg.kind, &si, &sj, &cfg.params).scalar()
            })
            .collect()
    }

    /// Weighted normal equations `H = sum w J^T J`, `b = sum w J^T e`.
    fn normal_equations(
        &self,
        warp: &WarpModel,
        cfg: &AlignConfig,
    ) -> (DMatrix<f64>, DVector<f64>, usize) {
        let n = warp.len();
        let ctx = self.ctx();
        let partials: Vec<([[f64; 6]; 6], [f64; 6], usize)> = self
            .samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut h = [[0.0; 6]; 6];
                let mut b = [0.0; 6];
                let mut count = 0;
                for &(x, y) in chunk {
                    let p = Point::new(x as f64, y as f64);
                    let q = warp.apply(p);
                    if !self.in_domain(q) {
                        continue;
                    }
                    let Some(si) = self.current.sample(q) else {
                        continue;
                    };
                    let sj = self.reference.sample_at(x, y);
                    let Some(e) = pixel_residual(cfg.kind, &si, &sj, &cfg.params).scalar() else {
                        continue;
                    };
                    let de_du = jacobian_from_samples(cfg.kind, &ctx, q, &si, &sj, &cfg.params);
                    let dw = warp.jacobian(p);
                    let mut j = [0.0; 6];
                    for k in 0..n {
                        j[k] = de_du[0] * dw[0][k] + de_du[1] * dw[1][k];
                    }
                    let w = huber_weight(e, cfg.huber_delta);
                    for r in 0..n {
                        b[r] += w * j[r] * e;
                        for c in r..n {
                            h[r][c] += w * j[r] * j[c];
                        }
                    }
                    count += 1;
                }
                (h, b, count)
            })
            .collect();
        let mut h = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut count = 0;
        for (ph, pb, pc) in partials {
            for r in 0..n {
                b[r] += pb[r];
                for c in r..n {
                    h[(r, c)] += ph[r][c];
                }
            }
            count += pc;
        }
        for r in 0..n {
            for c in 0..r {
                h[(r, c)] = h[(c, r)];
            }
        }
        (h, b, count)
    }
}

/// Sum of Huber losses over residuals valid in both lists.
fn shared_cost(a: &[Option<f64>], b: &[Option<f64>], delta: f64) -> (f64, f64) {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| {
            Some((
                huber_rho((*x)? * (*x)?, delta),
                huber_rho((*y)? * (*y)?, delta),
            ))
        })
        .fold((0.0, 0.0), |(sa, sb), (x, y)| (sa + x, sb + y))
}

/// Solves `(H + lambda (diag H + I)) delta = -b`.
fn solve(h: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut m = h.clone();
    if lambda > 0.0 {
        for k in 0..m.nrows() {
            m[(k, k)] += lambda * (h[(k, k)] + 1.0);
        }
    }
    let delta = m.cholesky()?.solve(&(-b));
    delta.iter().all(|v| v.is_finite()).then_some(delta)
}

struct LevelOutcome {
    warp: WarpModel,
    iterations: usize,
    converged: bool,
}

fn optimize_level(
    level: &Level,
    level_index: usize,
    mut warp: WarpModel,
    cfg: &AlignConfig,
    trace: &mut Vec<IterationRecord>,
) -> Result<LevelOutcome> {
    let mut residuals = level.residuals(&warp, cfg);
    for iteration in 0..cfg.max_iterations {
        let (h, b, count) = level.normal_equations(&warp, cfg);
        if count < MIN_POINTS {
            return Err(Error::EmptySelection {
                found: count,
                required: MIN_POINTS,
            });
        }
        if b.iter().all(|&v| v == 0.0) {
            trace.push(IterationRecord {
                level: level_index,
                cost_before: shared_cost(&residuals, &residuals, cfg.huber_delta).0,
                cost_after: shared_cost(&residuals, &residuals, cfg.huber_delta).0,
                update_norm: 0.0,
                accepted: true,
                residuals: count,
            });
            return Ok(LevelOutcome {
                warp,
                iterations: iteration + 1,
                converged: true,
            });
        }

        // Undamped Gauss-Newton first, then increasing Levenberg damping
        // until the objective does not grow.
        let mut lambda = 0.0;
        let mut step = None;
        for _ in 0..MAX_DAMPING_STEPS {
            if let Some(delta) = solve(&h, &b, lambda) {
                let candidate = warp.updated(delta.as_slice());
                if candidate.validate().is_ok() {
                    let cand_res = level.residuals(&candidate, cfg);
                    let (before, after) = shared_cost(&residuals, &cand_res, cfg.huber_delta);
                    let norm = delta.norm();
                    if after <= before {
                        step = Some((candidate, cand_res, before, after, norm));
                        break;
                    }
                    trace.push(IterationRecord {
                        level: level_index,
                        cost_before: before,
                        cost_after: after,
                        update_norm: norm,
                        accepted: false,
                        residuals: count,
                    });
                    if norm < cfg.convergence_epsilon {
                        // Even tiny steps raise the cost: we sit at a minimum
                        // up to rounding.
                        return Ok(LevelOutcome {
                            warp,
                            iterations: iteration + 1,
                            converged: true,
                        });
                    }
                }
            }
            lambda = if lambda == 0.0 {
                LM_LAMBDA
            } else {
                lambda * 10.0
            };
        }
        let Some((candidate, cand_res, before, after, norm)) = step else {
            return Ok(LevelOutcome {
                warp,
                iterations: iteration + 1,
                converged: false,
            });
        };
        trace.push(IterationRecord {
            level: level_index,
            cost_before: before,
            cost_after: after,
            update_norm: norm,
            accepted: true,
            residuals: count,
        });
        warp = candidate;
        residuals = cand_res;
        if norm < cfg.convergence_epsilon {
            return Ok(LevelOutcome {
                warp,
                iterations: iteration + 1,
                converged: true,
            });
        }
    }
    Ok(LevelOutcome {
        warp,
        iterations: cfg.max_iterations,
        converged: false,
    })
}

fn check_pair(reference: &GrayImage, current: &GrayImage) -> Result<()> {
    if reference.dimensions() != current.dimensions() {
        return Err(Error::Dimension(format!(
            "reference is {}x{}, current is {}x{}",
            reference.width(),
            reference.height(),
            current.width(),
            current.height()
        )));
    }
    Ok(())
}

/// Estimates the warp taking reference coordinates to current ones.
pub fn align(
    reference: &GrayImage,
    current: &GrayImage,
    cfg: &AlignConfig,
    init: WarpModel,
) -> Result<AlignmentResult> {
    cfg.validate()?;
    init.validate()?;
    check_pair(reference, current)?;
    let ref_pyr = build_pyramid(reference, cfg.pyramid_levels)?;
    let cur_pyr = build_pyramid(current, cfg.pyramid_levels)?;

    let mut warp = init;
    for _ in 1..cfg.pyramid_levels {
        warp = warp.to_coarser();
    }
    let mut trace = Vec::new();
    let mut iterations_per_level = Vec::with_capacity(cfg.pyramid_levels);
    let mut converged = false;
    for level_index in (0..cfg.pyramid_levels).rev() {
        let level = Level::new(&ref_pyr[level_index], &cur_pyr[level_index], cfg)?;
        let outcome = optimize_level(&level, level_index, warp, cfg, &mut trace)?;
        iterations_per_level.push(outcome.iterations);
        converged = outcome.converged;
        warp = outcome.warp;
        if level_index > 0 {
            warp = warp.to_finer();
        }
    }

    let finest = Level::new(reference, current, cfg)?;
    let residuals = finest.residuals(&warp, cfg);
    let valid: Vec<f64> = residuals.iter().flatten().copied().collect();
    let final_cost = valid
        .iter()
        .map(|e| huber_rho(e * e, cfg.huber_delta))
        .sum();
    let inliers = valid.iter().filter(|e| e.abs() <= cfg.huber_delta).count();
    Ok(AlignmentResult {
        warp,
        converged,
        iterations_per_level,
        final_cost,
        inlier_fraction: inliers as f64 / valid.len().max(1) as f64,
        trace,
    })
}

/// Robust objective `sum rho(e^2)` over the patch pixels of the selected
/// points, at full resolution and fixed warp. Samples warped outside the
/// current image are skipped.
pub fn evaluate_objective(
    reference: &GrayImage,
    current: &GrayImage,
    cfg: &AlignConfig,
    warp: &WarpModel,
) -> Result<f64> {
    cfg.validate()?;
    warp.validate()?;
    check_pair(reference, current)?;
    let level = Level::new(reference, current, cfg)?;
    Ok(level
        .residuals(warp, cfg)
        .iter()
        .flatten()
        .map(|e| huber_rho(e * e, cfg.huber_delta))
        .sum())
}

/// Result row: `warp,p0,..,converged,final_cost,inlier_fraction`.
pub fn result_csv(result: &AlignmentResult) -> String {
    let names: &[&str] = match result.warp {
        WarpModel::Translation2(_) => &["tx", "ty"],
        WarpModel::Affine6(_) => &["a11", "a12", "a21", "a22", "tx", "ty"],
    };
    let mut out = format!(
        "model,{},converged,final_cost,inlier_fraction\n",
        names.join(",")
    );
    let params: Vec<String> = result.warp.params().iter().map(|v| v.to_string()).collect();
    out.push_str(&format!(
        "{},{},{},{},{}\n",
        result.warp.name(),
        params.join(","),
        result.converged,
        result.final_cost,
        result.inlier_fraction
    ));
    out
}

/// One line per Gauss-Newton iteration, coarsest level first.
pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from("level,cost_before,cost_after,update_norm,accepted,residuals\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.level, r.cost_before, r.cost_after, r.update_norm, r.accepted, r.residuals
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{paraboloid, smooth_random};

    #[test]
    fn huber_closed_form() {
        let d = 0.1;
        assert!((huber_rho((2.0 * d) * (2.0 * d), d) - 3.0 * d * d).abs() < 1e-15);
        assert_eq!(huber_rho(0.0025, d), 0.0025);
        assert_eq!(huber_weight(0.3, d), d / 0.3);
        assert_eq!(huber_weight(-0.05, d), 1.0);
    }

    #[test]
    fn selection_counts() {
        let img = smooth_random(10, 10, 2.0, 1);
        let cfg = AlignConfig {
            point_selection: PointSelection::GridStride(1),
            ..AlignConfig::default()
        };
        assert_eq!(select_points(&img, &cfg).unwrap().len(), 16);
        let flat = GrayImage::constant(30, 30, 0.5);
        assert!(matches!(
            select_points(&flat, &AlignConfig::default()),
            Err(Error::EmptySelection { found: 0, .. })
        ));
        let all = AlignConfig {
            point_selection: PointSelection::AllGradientAbove(0.0),
            ..AlignConfig::default()
        };
        let img = smooth_random(20, 16, 2.0, 1);
        assert_eq!(select_points(&img, &all).unwrap().len(), 14 * 10);
    }

    #[test]
    fn identity_pair_stays_put() {
        let img = smooth_random(64, 64, 4.0, 2);
        for kind in [MetricKind::Photo, MetricKind::Sgf, MetricKind::Sgf3] {
            let cfg = AlignConfig {
                pyramid_levels: 3,
                ..AlignConfig::for_kind(kind)
            };
            let r = align(&img, &img, &cfg, WarpModel::default()).unwrap();
            assert!(r.converged);
            assert!(
                r.warp.params().iter().all(|v| v.abs() < 1e-12),
                "{kind}: {:?}",
                r.warp
            );
            // Residuals vanish up to rounding, so accepted updates do too.
            // Scaled metrics have a vanishing Jacobian at a perfect match and
            // may first try (and reject) a large step built from rounding noise.
            assert!(r
                .trace
                .iter()
                .filter(|t| t.accepted)
                .all(|t| t.update_norm < 1e-12));
            if kind == MetricKind::Photo {
                assert_eq!(r.trace[0].update_norm, 0.0);
            }
            assert!(r.final_cost < 1e-20);
            assert!(evaluate_objective(&img, &img, &cfg, &WarpModel::default()).unwrap() < 1e-20);
        }
    }

    #[test]
    fn paraboloid_settles_after_two_steps() {
        let img = paraboloid(48, 48, 2e-4);
        let cur = img.translated(0.4, -0.3);
        let cfg = AlignConfig {
            pyramid_levels: 1,
            huber_delta: 1.0,
            point_selection: PointSelection::AllGradientAbove(0.0),
            convergence_epsilon: 1e-3,
            ..AlignConfig::for_kind(MetricKind::Photo)
        };
        let r = align(&img, &cur, &cfg, WarpModel::default()).unwrap();
        assert!(r.converged);
        // Any step after the second is below the convergence threshold.
        let moving = r
            .trace
            .iter()
            .filter(|t| t.update_norm >= cfg.convergence_epsilon)
            .count();
        assert!(moving <= 2, "{:?}", r.trace);
        let t = r.warp.offset();
        assert!(
            (t[0] - 0.4).abs() < 1e-2 && (t[1] + 0.3).abs() < 1e-2,
            "{t:?}"
        );
    }

    #[test]
    fn rejects_unsupported_kind() {
        let img = smooth_random(32, 32, 3.0, 1);
        let cfg = AlignConfig::for_kind(MetricKind::Ncc);
        assert!(matches!(
            align(&img, &img, &cfg, WarpModel::default()),
            Err(Error::Kind { .. })
        ));
    }
}

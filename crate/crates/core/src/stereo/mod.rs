//! Winner-takes-all block matching on rectified pairs.
//!
//! A left pixel `(x, y)` at disparity `d` is compared with the right pixel
//! `(x - d, y)`. Costs are windowed sums of the selected metric with windows
//! clipped wherever either image runs out. Rows are independent and are
//! processed in parallel; each row builds a `width x candidates` cost matrix
//! and selects from it, so the full volume is only materialized on request.

mod export;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{read_disparity, DisparityFormat};

use crate::error::{Error, Result};
use crate::image::{GradientOperator, GrayImage, Point};
use crate::metrics::{
    finalize_window, pixel_terms, windowed_cost, ImageFields, MetricContext, MetricKind,
    MetricParams, WindowTerms,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoConfig {
    pub kind: MetricKind,
    pub params: MetricParams,
    pub operator: GradientOperator,
    pub min_disparity: i32,
    /// Largest candidate, inclusive.
    pub max_disparity: i32,
    pub subpixel: bool,
    /// A winner is kept only if `best * ratio < second best` among finite
    /// candidates more than one pixel away. A ratio of exactly 1 disables
    /// the test.
    pub uniqueness_ratio: f64,
    pub lr_check: bool,
    pub lr_threshold: f64,
}

impl Default for StereoConfig {
    fn default() -> Self {
        Self {
            kind: MetricKind::Sgf,
            params: MetricParams::default(),
            operator: GradientOperator::CentralDifference,
            min_disparity: 0,
            max_disparity: 64,
            subpixel: false,
            uniqueness_ratio: 1.15,
            lr_check: false,
            lr_threshold: 1.0,
        }
    }
}

impl StereoConfig {
    pub fn new(kind: MetricKind, window: usize, min_disparity: i32, max_disparity: i32) -> Self {
        Self {
            kind,
            params: MetricParams::with_window(window),
            min_disparity,
            max_disparity,
            ..Self::default()
        }
    }

    pub fn candidates(&self) -> usize {
        (self.max_disparity - self.min_disparity + 1).max(0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_disparity < 1 {
            return Err(Error::Config(format!(
                "max disparity must be at least 1, got {}",
                self.max_disparity
            )));
        }
        if self.min_disparity >= self.max_disparity {
            return Err(Error::Config(format!(
                "min disparity {} must be below max disparity {}",
                self.min_disparity, self.max_disparity
            )));
        }
        if !(self.uniqueness_ratio >= 1.0) {
            return Err(Error::Config(format!(
                "uniqueness ratio must be at least 1, got {}",
                self.uniqueness_ratio
            )));
        }
        if !(self.lr_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "left-right threshold must be non-negative, got {}",
                self.lr_threshold
            )));
        }
        Ok(())
    }

    fn validate_for(&self, width: usize) -> Result<()> {
        self.validate()?;
        let w = width as i64;
        if self.max_disparity as i64 >= w || (self.min_disparity as i64) <= -w {
            return Err(Error::Config(format!(
                "disparity range [{}, {}] exceeds the image width {width}",
                self.min_disparity, self.max_disparity
            )));
        }
        Ok(())
    }
}

/// Per-pixel disparities in the left frame. Invalid pixels hold NaN.
#[derive(Debug, Clone)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DisparityMap {
    /// `values` uses NaN (or any non-finite value) for invalid pixels.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} disparities for a {width}x{height} map",
                values.len()
            )));
        }
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.values[y * self.width + x];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        !self.values[y * self.width + x].is_nan()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| !v.is_nan()).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn invalid_fraction(&self) -> f64 {
        1.0 - self.valid_count() as f64 / self.values.len() as f64
    }
}

/// Maps are equal when they share dimensions, validity and valid values.
impl PartialEq for DisparityMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || a.is_nan() && b.is_nan())
    }
}

/// Costs for every pixel and candidate, stored per pixel with candidates
/// contiguous. Candidates whose centre pixel leaves the right image are +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    min_disparity: i32,
    candidates: usize,
    data: Vec<f64>,
}

impl CostVolume {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn min_disparity(&self) -> i32 {
        self.min_disparity
    }

    pub fn max_disparity(&self) -> i32 {
        self.min_disparity + self.candidates as i32 - 1
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Costs of all candidates at one pixel, smallest disparity first.
    pub fn costs(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.candidates;
        &self.data[i..i + self.candidates]
    }

    pub fn get(&self, x: usize, y: usize, d: i32) -> Option<f64> {
        let k = d - self.min_disparity;
        (0..self.candidates as i32)
            .contains(&k)
            .then(|| self.costs(x, y)[k as usize])
    }

    /// One disparity plane as a row-major `width * height` buffer.
    pub fn slice(&self, d: i32) -> Option<Vec<f64>> {
        let k = d - self.min_disparity;
        if !(0..self.candidates as i32).contains(&k) {
            return None;
        }
        Some(
            self.data
                .chunks_exact(self.candidates)
                .map(|c| c[k as usize])
                .collect(),
        )
    }

    /// Applies `f` to every entry; used to check selection invariance.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Winner-takes-all selection with the filters of `cfg`.
    pub fn select(&self, cfg: &StereoConfig) -> DisparityMap {
        let values = self
            .data
            .par_chunks(self.width * self.candidates)
            .flat_map_iter(|row| select_row(row, self.width, cfg))
            .collect();
        DisparityMap {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

fn prepare(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &StereoConfig,
) -> Result<(ImageFields, ImageFields)> {
    if left.dimensions() != right.dimensions() {
        return Err(Error::Dimension(format!(
            "left is {}x{}, right is {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    cfg.validate_for(left.width())?;
    Ok((
        ImageFields::new(left.clone(), cfg.operator)?,
        ImageFields::new(right.clone(), cfg.operator)?,
    ))
}

/// Number of additive term slots a kind actually uses.
fn slots(kind: MetricKind) -> usize {
    match kind {
        MetricKind::Ncc => 6,
        MetricKind::Gom => 2,
        _ => 1,
    }
}

/// Fills `out` (`width * candidates`, candidates contiguous) with the costs of
/// row `y`. Windows are clipped to offsets valid in both images, which gives
/// the same value as [`windowed_cost`] up to summation order.
fn row_costs(ctx: &MetricContext<'_>, y: usize, cfg: &StereoConfig, out: &mut [f64]) {
    let w = ctx.i.width();
    let h = ctx.i.height();
    let n = cfg.candidates();
    let r = cfg.params.radius();
    let ns = slots(cfg.kind);
    let rows = y.saturating_sub(r)..(y + r + 1).min(h);
    let mut columns: Vec<WindowTerms> = vec![[0.0; 6]; w];

    for (k, d) in (cfg.min_disparity..=cfg.max_disparity).enumerate() {
        // Left columns whose right partner exists.
        let lo = d.max(0) as usize;
        let hi = (w as i64 + d.min(0) as i64) as usize;
        for (c, col) in columns.iter_mut().enumerate() {
            *col = [0.0; 6];
            if c < lo || c >= hi {
                continue;
            }
            let cr = (c as i64 - d as i64) as usize;
            for yy in rows.clone() {
                let t = pixel_terms(
                    cfg.kind,
                    &ctx.i.sample_at(c, yy),
                    &ctx.j.sample_at(cr, yy),
                    &cfg.params,
                );
                for s in 0..ns {
                    col[s] += t[s];
                }
            }
        }
        for x in 0..w {
            let cost = if x < lo || x >= hi {
                f64::INFINITY
            } else {
                let mut acc = [0.0; 6];
                for col in &columns[x.saturating_sub(r)..(x + r + 1).min(w)] {
                    for s in 0..ns {
                        acc[s] += col[s];
                    }
                }
                finalize_window(cfg.kind, &acc, &cfg.params)
            };
            out[x * n + k] = cost;
        }
    }
}

/// Winner index with ties toward the smallest disparity; `None` if every
/// candidate is infinite.
fn argmin(costs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &c) in costs.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|b| c < costs[b]) {
            best = Some(k);
        }
    }
    best
}

/// Vertex offset of the parabola through three costs, clamped to +-0.5.
fn parabola_offset(prev: f64, mid: f64, next: f64) -> f64 {
    let denom = prev - 2.0 * mid + next;
    if !(denom > 0.0) || !prev.is_finite() || !next.is_finite() {
        return 0.0;
    }
    (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
}

fn select_row(row: &[f64], width: usize, cfg: &StereoConfig) -> Vec<f64> {
    let n = cfg.candidates();
    let at = |x: usize| &row[x * n..(x + 1) * n];
    // Right-image winners for the left-right check: the right pixel `xr`
    // at disparity `d` pairs with left pixel `xr + d`.
    let right_winner = |xr: usize| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n {
            let xl = xr as i64 + cfg.min_disparity as i64 + k as i64;
            if xl < 0 || xl >= width as i64 {
                continue;
            }
            let c = at(xl as usize)[k];
            if c.is_finite() && best.is_none_or(|(_, b)| c < b) {
                best = Some((k, c));
            }
        }
        best.map(|(k, _)| k)
    };

    (0..width)
        .map(|x| {
            let costs = at(x);
            let Some(k) = argmin(costs) else {
                return f64::NAN;
            };
            let best = costs[k];
            if cfg.uniqueness_ratio > 1.0 {
                let second = costs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j + 1 < k || j > k + 1)
                    .map(|(_, &c)| c)
                    .fold(f64::INFINITY, f64::min);
                // Without any competitor the winner cannot be shown unique.
                if second == f64::INFINITY || best * cfg.uniqueness_ratio >= second {
                    return f64::NAN;
                }
            }
            let d = cfg.min_disparity + k as i32;
            if cfg.lr_check {
                let xr = x as i64 - d as i64;
                let consistent = (0..width as i64).contains(&xr)
                    && right_winner(xr as usize)
                        .is_some_and(|kr| (kr as f64 - k as f64).abs() <= cfg.lr_threshold);
                if !consistent {
                    return f64::NAN;
                }
            }
            let mut value = d as f64;
            if cfg.subpixel && k > 0 && k + 1 < n {
                value += parabola_offset(costs[k - 1], best, costs[k + 1]);
            }
            value
        })
        .collect()
}

/// Dense disparity map for a rectified pair.
pub fn match_pair(left: &GrayImage, right: &GrayImage, cfg: &StereoConfig) -> Result<DisparityMap> {
    let (fl, fr) = prepare(left, right, cfg)?;
    let ctx = MetricContext::new(&fl, &fr);
    let (w, h) = left.dimensions();
    let n = cfg.candidates();
    let values: Vec<f64> = (0..h)
        .into_par_iter()
        .map_init(
            || vec![0.0; w * n],
            |buf, y| {
                row_costs(&ctx, y, cfg, buf);
                select_row(buf, w, cfg)
            },
        )
        .flatten_iter()
        .collect();
    Ok(DisparityMap {
        width: w,
        height: h,
        values,
    })
}

/// Materializes every windowed cost of the pair.
pub fn compute_cost_volume(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &StereoConfig,
) -> Result<CostVolume> {
    let (fl, fr) = prepare(left, right, cfg)?;
    let ctx = MetricContext::new(&fl, &fr);
    let (w, h) = left.dimensions();
    let n = cfg.candidates();
    let mut data = vec![0.0; w * h * n];
    data.par_chunks_mut(w * n)
        .enumerate()
        .for_each(|(y, row)| row_costs(&ctx, y, cfg, row));
    Ok(CostVolume {
        width: w,
        height: h,
        min_disparity: cfg.min_disparity,
        candidates: n,
        data,
    })
}

/// Cost of every candidate at left pixel `u`, evaluated window by window.
/// Candidates whose right pixel leaves the image cost +inf.
pub fn cost_curve(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &StereoConfig,
    u: (usize, usize),
) -> Result<Vec<(i32, f64)>> {
    let (fl, fr) = prepare(left, right, cfg)?;
    let (x, y) = u;
    if x >= left.width() || y >= left.height() {
        return Err(Error::OutOfBounds {
            x: x as f64,
            y: y as f64,
        });
    }
    let ctx = MetricContext::new(&fl, &fr);
    (cfg.min_disparity..=cfg.max_disparity)
        .map(|d| {
            let xr = x as f64 - d as f64;
            let cost = if xr < 0.0 || xr > (left.width() - 1) as f64 {
                f64::INFINITY
            } else {
                windowed_cost(
                    cfg.kind,
                    &ctx,
                    Point::new(x as f64, y as f64),
                    Point::new(xr, y as f64),
                    &cfg.params,
                )?
            };
            Ok((d, cost))
        })
        .collect()
}

/// `d,cost` CSV of a cost curve; infinite costs are written as `inf`.
pub fn curve_csv(curve: &[(i32, f64)]) -> String {
    let mut out = String::from("d,cost\n");
    for (d, c) in curve {
        out.push_str(&format!("{d},{c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::noise_texture;

    fn cfg(kind: MetricKind, max: i32) -> StereoConfig {
        StereoConfig {
            uniqueness_ratio: 1.0,
            ..StereoConfig::new(kind, 5, 0, max)
        }
    }

    #[test]
    fn streaming_volume_matches_naive_windows() {
        let left = noise_texture(24, 14, 1);
        let right = noise_texture(24, 14, 2);
        for kind in MetricKind::ALL {
            let c = StereoConfig {
                min_disparity: -3,
                ..cfg(kind, 6)
            };
            let vol = compute_cost_volume(&left, &right, &c).unwrap();
            for (x, y) in [(0, 0), (5, 7), (23, 13), (2, 12), (12, 1)] {
                let curve = cost_curve(&left, &right, &c, (x, y)).unwrap();
                for (d, naive) in curve {
                    let v = vol.get(x, y, d).unwrap();
                    if naive.is_infinite() {
                        assert!(v.is_infinite(), "{kind} d={d}");
                    } else {
                        assert!(
                            (v - naive).abs() <= 1e-12 * naive.abs().max(1.0),
                            "{kind} ({x},{y}) d={d}: {v} vs {naive}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_candidates_are_infinite() {
        let img = noise_texture(20, 10, 3);
        let vol = compute_cost_volume(&img, &img, &cfg(MetricKind::Sad, 5)).unwrap();
        assert!(vol.get(2, 4, 3).unwrap().is_infinite());
        assert!(vol.get(3, 4, 3).unwrap().is_finite());
    }

    #[test]
    fn photo_self_match_slice_is_zero() {
        let img = noise_texture(20, 10, 3);
        let vol = compute_cost_volume(&img, &img, &cfg(MetricKind::Photo, 5)).unwrap();
        assert!(vol.slice(0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn self_match_gives_zero_disparity() {
        let img = noise_texture(40, 20, 4);
        for kind in [
            MetricKind::Sad,
            MetricKind::Sgf,
            MetricKind::Ncc,
            MetricKind::Sgf2,
        ] {
            let map = match_pair(&img, &img, &cfg(kind, 8)).unwrap();
            for y in 0..20 {
                for x in 0..40 {
                    if let Some(d) = map.get(x, y) {
                        assert_eq!(d, 0.0, "{kind} at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn flat_image_fails_uniqueness() {
        let img = GrayImage::constant(30, 10, 0.4);
        let c = StereoConfig {
            uniqueness_ratio: 1.5,
            ..cfg(MetricKind::Sad, 6)
        };
        assert_eq!(match_pair(&img, &img, &c).unwrap().valid_count(), 0);
    }

    #[test]
    fn ties_prefer_small_disparity() {
        let img = GrayImage::constant(30, 10, 0.4);
        let map = match_pair(&img, &img, &cfg(MetricKind::Sad, 6)).unwrap();
        assert_eq!(map.get(20, 5), Some(0.0));
    }

    #[test]
    fn range_wider_than_image_is_rejected() {
        let img = noise_texture(16, 8, 1);
        assert!(matches!(
            match_pair(&img, &img, &cfg(MetricKind::Sad, 16)),
            Err(Error::Config(_))
        ));
        let bad = StereoConfig {
            min_disparity: 5,
            ..cfg(MetricKind::Sad, 5)
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn parabola_vertex() {
        // Costs of (t - 0.3)^2 at t = -1, 0, 1.
        let f = |t: f64| (t - 0.3) * (t - 0.3);
        assert!((parabola_offset(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
        assert_eq!(parabola_offset(0.0, 1.0, 9.0), -0.5);
    }

    #[test]
    fn selection_is_invariant_to_scaling() {
        let left = noise_texture(32, 12, 5);
        let right = left.shifted(-3, 0);
        let c = StereoConfig {
            uniqueness_ratio: 1.2,
            lr_check: true,
            subpixel: true,
            ..cfg(MetricKind::Sgf, 8)
        };
        let vol = compute_cost_volume(&left, &right, &c).unwrap();
        let a = vol.select(&c);
        let b = vol.map(|v| 3.0 * v).select(&c);
        assert_eq!(a.valid_mask(), b.valid_mask());
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!(p.is_nan() && q.is_nan() || (p - q).abs() < 1e-12);
        }
        assert_eq!(a, match_pair(&left, &right, &c).unwrap());
    }

    #[test]
    fn winner_cost_is_minimal() {
        let left = noise_texture(32, 12, 6);
        let right = noise_texture(32, 12, 7);
        let c = cfg(MetricKind::Sgf3, 8);
        let vol = compute_cost_volume(&left, &right, &c).unwrap();
        let map = vol.select(&c);
        for y in 0..12 {
            for x in 0..32 {
                if let Some(d) = map.get(x, y) {
                    let best = vol.get(x, y, d as i32).unwrap();
                    assert!(vol.costs(x, y).iter().all(|&v| best <= v));
                }
            }
        }
    }

    #[test]
    fn lr_check_rejects_occlusions() {
        // Right view is the left one shifted by 4; the leftmost columns of the
        // left image have no partner and must not pass the check.
        let left = noise_texture(40, 12, 8);
        let right = left.shifted(-4, 0);
        let c = StereoConfig {
            lr_check: true,
            ..cfg(MetricKind::Sad, 8)
        };
        let map = match_pair(&left, &right, &c).unwrap();
        for y in 0..12 {
            assert!(!map.is_valid(0, y));
            assert_eq!(map.get(20, y), Some(4.0));
        }
    }
}

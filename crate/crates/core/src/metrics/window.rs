use super::{pixel_residual, MetricContext, MetricKind, MetricParams, PixelSample};
use crate::error::{Error, Result};
use crate::image::Point;

/// Additive per-pixel contributions of one window. Pixel-wise kinds use slot
/// 0 only; `Gom` uses two slots and `Ncc` all six.
pub type WindowTerms = [f64; 6];

#[inline]
pub fn pixel_terms(
    kind: MetricKind,
    si: &PixelSample,
    sj: &PixelSample,
    params: &MetricParams,
) -> WindowTerms {
    match kind {
        MetricKind::Ncc => {
            let (a, b) = (si.intensity, sj.intensity);
            [1.0, a, b, a * a, b * b, a * b]
        }
        MetricKind::Gom => {
            let d = si.g[0] * sj.g[0] + si.g[1] * sj.g[1];
            [d.abs(), si.g_norm * sj.g_norm, 0.0, 0.0, 0.0, 0.0]
        }
        _ => [
            pixel_residual(kind, si, sj, params).l1(),
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ],
    }
}

/// Turns summed terms into the window cost. Degenerate `Ncc`/`Gom`
/// denominators give the maximal-dissimilarity cost 1.
#[inline]
pub fn finalize_window(kind: MetricKind, t: &WindowTerms, params: &MetricParams) -> f64 {
    match kind {
        MetricKind::Gom => {
            if t[1] <= params.tau {
                1.0
            } else {
                1.0 - t[0] / t[1]
            }
        }
        MetricKind::Ncc => {
            let n = t[0];
            if n < 1.0 {
                return 1.0;
            }
            let sxx = t[3] - t[1] * t[1] / n;
            let syy = t[4] - t[2] * t[2] / n;
            let sxy = t[5] - t[1] * t[2] / n;
            if sxx <= params.tau || syy <= params.tau {
                return 1.0;
            }
            (1.0 - sxy / (sxx * syy).sqrt()).clamp(0.0, 2.0)
        }
        _ => t[0],
    }
}

/// Aggregated cost over a `w x w` window centred on `ui` and `uj`.
///
/// The same offsets are applied to both images; offsets leaving either
/// domain are dropped, which clips the window at borders.
pub fn windowed_cost(
    kind: MetricKind,
    ctx: &MetricContext<'_>,
    ui: Point,
    uj: Point,
    params: &MetricParams,
) -> Result<f64> {
    if ctx.i.sample(ui).is_none() {
        return Err(Error::OutOfBounds { x: ui.x, y: ui.y });
    }
    if ctx.j.sample(uj).is_none() {
        return Err(Error::OutOfBounds { x: uj.x, y: uj.y });
    }
    let r = params.radius() as isize;
    let mut terms = [0.0; 6];
    for dy in -r..=r {
        for dx in -r..=r {
            let (dx, dy) = (dx as f64, dy as f64);
            let (Some(si), Some(sj)) = (
                ctx.i.sample(ui.offset(dx, dy)),
                ctx.j.sample(uj.offset(dx, dy)),
            ) else {
                continue;
            };
            let t = pixel_terms(kind, &si, &sj, params);
            for (acc, v) in terms.iter_mut().zip(t) {
                *acc += v;
            }
        }
    }
    Ok(finalize_window(kind, &terms, params))
}

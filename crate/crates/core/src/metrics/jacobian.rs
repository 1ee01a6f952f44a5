//! Derivatives of pixel residuals with respect to the location in image `i`.
//!
//! Every residual depends on `u_i` only through the sampled intensity and
//! gradient of image `i`, so each Jacobian is `(de/dg)^T H` where `H` is the
//! spatial derivative of the bilinearly interpolated gradient field (the
//! central-difference Hessian at pixel centres). Regularized quantities are
//! chained through `d(g/s)/dg = (Id - a a^T) / s` with `s = sqrt(|g|^2 + eps)`.
//!
//! The interpolants have kinks on pixel grid lines and branch points (`max`,
//! `abs`) take the `i` branch on ties; finite differences that straddle
//! either only see the averaged one-sided slopes.

use super::residual::{nij, nji};
use super::{pixel_residual, MetricContext, MetricKind, MetricParams, PixelSample};
use crate::error::{Error, Result};
use crate::image::Point;

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn scale(v: [f64; 2], s: f64) -> [f64; 2] {
    [v[0] * s, v[1] * s]
}

#[inline]
fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn unit(v: [f64; 2], norm: f64) -> [f64; 2] {
    if norm > 0.0 {
        scale(v, 1.0 / norm)
    } else {
        [0.0, 0.0]
    }
}

/// `sign` with the tie (zero) mapped to +1.
#[inline]
fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Pulls a derivative w.r.t. the regularized gradient `a` back to `g`.
#[inline]
fn through_regularization(si: &PixelSample, d_a: [f64; 2]) -> [f64; 2] {
    let proj = dot(si.a, d_a);
    scale(
        [d_a[0] - proj * si.a[0], d_a[1] - proj * si.a[1]],
        1.0 / si.scale,
    )
}

/// `de/dg_i` for gradient-driven kinds; `None` for kinds handled elsewhere.
fn d_residual_d_gradient(
    kind: MetricKind,
    si: &PixelSample,
    sj: &PixelSample,
    params: &MetricParams,
) -> Option<[f64; 2]> {
    use MetricKind::*;
    let g_dir = unit(si.g, si.g_norm);
    Some(match kind {
        Gm => g_dir,
        Agm | Mag => scale(g_dir, sign(si.g_norm - sj.g_norm)),
        Ngf => {
            let d = dot(si.a, sj.a);
            through_regularization(si, scale(sj.a, -2.0 * d))
        }
        Ugf => through_regularization(si, scale(sj.a, -1.0)),
        Sgf => {
            let a2 = dot(si.a, si.a);
            let b2 = dot(sj.a, sj.a);
            let d_a = if a2 >= b2 && a2 >= params.tau {
                // e = 1 - a.b / |a|^2
                let ab = dot(si.a, sj.a);
                add(scale(sj.a, -1.0 / a2), scale(si.a, 2.0 * ab / (a2 * a2)))
            } else {
                scale(sj.a, -1.0 / b2.max(params.tau))
            };
            through_regularization(si, d_a)
        }
        Sgf2 => {
            let d_max = if nij(si, sj) >= nji(si, sj) {
                // nij = |b| |g| s  =>  |b| (s / |g| + |g| / s) g
                scale(
                    g_dir,
                    sj.a_norm * (si.scale + si.g_norm * si.g_norm / si.scale),
                )
            } else {
                // nji = |a| |g_j| s_j with d|a|/dg = eps g / (|g| s^3)
                let eps = si.scale * si.scale - si.g_norm * si.g_norm;
                scale(g_dir, sj.g_norm * sj.scale * eps / si.scale.powi(3))
            };
            [d_max[0] - sj.g[0], d_max[1] - sj.g[1]]
        }
        Sgf3 => [
            sj.g_norm * g_dir[0] - sj.g[0],
            sj.g_norm * g_dir[1] - sj.g[1],
        ],
        Photo | Sad | Pm | Gn | Ncc | Gom => return None,
    })
}

/// Analytic `de/du_i` at `ui` (row vector).
///
/// Supported kinds: `Photo`, `Sad`, `Gm`, `Agm`, `Mag`, `Pm`, `Ngf`, `Ugf`,
/// `Sgf`, `Sgf2`, `Sgf3`. `ui` must be at least two pixels from the border.
pub fn jacobian_ui(
    kind: MetricKind,
    ctx: &MetricContext<'_>,
    ui: Point,
    uj: Point,
    params: &MetricParams,
) -> Result<[f64; 2]> {
    if matches!(kind, MetricKind::Gn | MetricKind::Ncc | MetricKind::Gom) {
        return Err(Error::Kind {
            kind,
            reason: "no analytic Jacobian",
        });
    }
    check_margin(ctx, ui, 2.0)?;
    let si = ctx
        .i
        .sample(ui)
        .ok_or(Error::OutOfBounds { x: ui.x, y: ui.y })?;
    let sj = ctx
        .j
        .sample(uj)
        .ok_or(Error::OutOfBounds { x: uj.x, y: uj.y })?;
    Ok(jacobian_from_samples(kind, ctx, ui, &si, &sj, params))
}

/// Jacobian for already-sampled pixels; `ui` locates the derivative sample.
pub(crate) fn jacobian_from_samples(
    kind: MetricKind,
    ctx: &MetricContext<'_>,
    ui: Point,
    si: &PixelSample,
    sj: &PixelSample,
    params: &MetricParams,
) -> [f64; 2] {
    let photo = si.intensity - sj.intensity;
    let grad_i = || {
        ctx.i
            .image()
            .derivative_bilinear(ui)
            .expect("caller checked the sample location")
    };
    match kind {
        MetricKind::Photo => return grad_i(),
        MetricKind::Sad => return scale(grad_i(), sign(photo)),
        _ => {}
    }
    let dg = ctx
        .i
        .gradient()
        .base()
        .derivative(ui)
        .expect("caller checked the sample location");
    let row_times_h = |v: [f64; 2]| {
        [
            v[0] * dg[0][0] + v[1] * dg[1][0],
            v[0] * dg[0][1] + v[1] * dg[1][1],
        ]
    };
    if kind == MetricKind::Pm {
        let gn = [si.g[0] - sj.g[0], si.g[1] - sj.g[1]];
        let grad_part = row_times_h(scale([sign(gn[0]), sign(gn[1])], params.alpha));
        let int_part = scale(grad_i(), (1.0 - params.alpha) * sign(photo));
        return add(grad_part, int_part);
    }
    let d_g = d_residual_d_gradient(kind, si, sj, params).expect("kind filtered above");
    row_times_h(d_g)
}

fn check_margin(ctx: &MetricContext<'_>, ui: Point, margin: f64) -> Result<()> {
    let max_x = ctx.i.width() as f64 - 1.0 - margin;
    let max_y = ctx.i.height() as f64 - 1.0 - margin;
    if !(ui.x >= margin && ui.y >= margin && ui.x <= max_x && ui.y <= max_y) {
        return Err(Error::Border { x: ui.x, y: ui.y });
    }
    Ok(())
}

/// Central finite-difference `de/du_i` with step `h` pixels, resampling every
/// field bilinearly at `ui +- h e_x` and `ui +- h e_y`.
pub fn jacobian_fd(
    kind: MetricKind,
    ctx: &MetricContext<'_>,
    ui: Point,
    uj: Point,
    params: &MetricParams,
    h: f64,
) -> Result<[f64; 2]> {
    if kind.is_window_only() || kind == MetricKind::Gn {
        return Err(Error::Kind {
            kind,
            reason: "finite differences need a scalar pixel residual",
        });
    }
    if !(h > 0.0) {
        return Err(Error::Param(format!("step must be positive, got {h}")));
    }
    check_margin(ctx, ui, h + 1.0)?;
    let sj = ctx
        .j
        .sample(uj)
        .ok_or(Error::OutOfBounds { x: uj.x, y: uj.y })?;
    let eval = |p: Point| -> f64 {
        let si = ctx.i.sample(p).expect("margin checked");
        pixel_residual(kind, &si, &sj, params)
            .scalar()
            .expect("scalar kind")
    };
    let dx = (eval(ui.offset(h, 0.0)) - eval(ui.offset(-h, 0.0))) / (2.0 * h);
    let dy = (eval(ui.offset(0.0, h)) - eval(ui.offset(0.0, -h))) / (2.0 * h);
    Ok([dx, dy])
}

/// `|analytic - reference| / max(|reference|, floor)` in the Euclidean norm.
pub fn relative_error(analytic: [f64; 2], reference: [f64; 2], floor: f64) -> f64 {
    let diff = (analytic[0] - reference[0]).hypot(analytic[1] - reference[1]);
    diff / reference[0].hypot(reference[1]).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample_from(g: [f64; 2], eps: f64, intensity: f64) -> PixelSample {
        let g_norm = g[0].hypot(g[1]);
        let s = (g_norm * g_norm + eps).sqrt();
        PixelSample {
            intensity,
            g,
            g_norm,
            a: [g[0] / s, g[1] / s],
            a_norm: g_norm / s,
            scale: s,
        }
    }

    /// de/dg against central differences taken directly in gradient space.
    #[test]
    fn gradient_space_derivatives_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let params = MetricParams::default();
        let kinds = [
            MetricKind::Gm,
            MetricKind::Agm,
            MetricKind::Ngf,
            MetricKind::Ugf,
            MetricKind::Sgf,
            MetricKind::Sgf2,
            MetricKind::Sgf3,
        ];
        for _ in 0..500 {
            let gi = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
            let gj = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
            let (ei, ej) = (rng.random_range(1e-4..1e-2), rng.random_range(1e-4..1e-2));
            let sj = sample_from(gj, ej, 0.0);
            for kind in kinds {
                let f = |g: [f64; 2]| {
                    pixel_residual(kind, &sample_from(g, ei, 0.0), &sj, &params)
                        .scalar()
                        .unwrap()
                };
                let h = 1e-7;
                let fd = [
                    (f([gi[0] + h, gi[1]]) - f([gi[0] - h, gi[1]])) / (2.0 * h),
                    (f([gi[0], gi[1] + h]) - f([gi[0], gi[1] - h])) / (2.0 * h),
                ];
                let an =
                    d_residual_d_gradient(kind, &sample_from(gi, ei, 0.0), &sj, &params).unwrap();
                let err = relative_error(an, fd, 1e-6);
                assert!(err < 1e-5, "{kind}: analytic {an:?} fd {fd:?} err {err}");
            }
        }
    }
}

use super::{MetricContext, MetricKind, MetricParams, PixelSample};
use crate::error::{Error, Result};
use crate::image::Point;

/// Per-pixel residual. Only `Gn` is vector valued.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    Scalar(f64),
    Vector([f64; 2]),
}

impl Residual {
    /// Magnitude used for window aggregation: `|e|`, or `|e|_1` for vectors.
    #[inline]
    pub fn l1(&self) -> f64 {
        match *self {
            Residual::Scalar(v) => v.abs(),
            Residual::Vector([a, b]) => a.abs() + b.abs(),
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match *self {
            Residual::Scalar(v) => Some(v),
            Residual::Vector(_) => None,
        }
    }
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `nij = |b| |g_i| s_i`, which equals `(|b| / |a|) |g_i|^2` wherever the
/// latter is defined and stays finite on zero gradients.
#[inline]
pub(crate) fn nij(si: &PixelSample, sj: &PixelSample) -> f64 {
    sj.a_norm * si.g_norm * si.scale
}

#[inline]
pub(crate) fn nji(si: &PixelSample, sj: &PixelSample) -> f64 {
    si.a_norm * sj.g_norm * sj.scale
}

/// Residual between two already-sampled pixels.
///
/// Panics for the window-only kinds (`Ncc`, `Gom`); [`residual`] reports
/// those as errors instead.
#[inline]
pub fn pixel_residual(
    kind: MetricKind,
    si: &PixelSample,
    sj: &PixelSample,
    params: &MetricParams,
) -> Residual {
    use MetricKind::*;
    let photo = si.intensity - sj.intensity;
    let gm = si.g_norm - sj.g_norm;
    let value = match kind {
        Photo => photo,
        Sad => photo.abs(),
        Gm => gm,
        Agm | Mag => gm.abs(),
        Gn => return Residual::Vector([si.g[0] - sj.g[0], si.g[1] - sj.g[1]]),
        Pm => {
            let gn = (si.g[0] - sj.g[0]).abs() + (si.g[1] - sj.g[1]).abs();
            (1.0 - params.alpha) * photo.abs() + params.alpha * gn
        }
        Ngf => {
            let d = dot(si.a, sj.a);
            1.0 - d * d
        }
        Ugf => 1.0 - dot(si.a, sj.a),
        Sgf => {
            let m = dot(si.a, si.a).max(dot(sj.a, sj.a)).max(params.tau);
            1.0 - dot(si.a, sj.a) / m
        }
        Sgf2 => nij(si, sj).max(nji(si, sj)) - dot(si.g, sj.g),
        Sgf3 => si.g_norm * sj.g_norm - dot(si.g, sj.g),
        Ncc | Gom => panic!("{kind} has no per-pixel residual"),
    };
    Residual::Scalar(value)
}

/// Identifies which smooth piece of a residual is active: the `max`, `abs`
/// and sign choices made while evaluating it. Two locations with different
/// signatures lie on opposite sides of a kink.
pub(crate) fn branch_signature(
    kind: MetricKind,
    si: &PixelSample,
    sj: &PixelSample,
    params: &MetricParams,
) -> u32 {
    use MetricKind::*;
    let bit = |c: bool| c as u32;
    let photo = si.intensity - sj.intensity;
    match kind {
        Sad => bit(photo < 0.0),
        Agm | Mag => bit(si.g_norm < sj.g_norm),
        Pm => bit(photo < 0.0) | bit(si.g[0] < sj.g[0]) << 1 | bit(si.g[1] < sj.g[1]) << 2,
        Sgf => {
            let (a2, b2) = (dot(si.a, si.a), dot(sj.a, sj.a));
            if a2 >= b2 && a2 >= params.tau {
                0
            } else if b2 >= params.tau {
                1
            } else {
                2
            }
        }
        Sgf2 => bit(nij(si, sj) < nji(si, sj)),
        _ => 0,
    }
}

/// Residual `e(ui, uj)`; non-integer coordinates are sampled bilinearly.
pub fn residual(
    kind: MetricKind,
    ctx: &MetricContext<'_>,
    ui: Point,
    uj: Point,
    params: &MetricParams,
) -> Result<Residual> {
    if kind.is_window_only() {
        return Err(Error::Kind {
            kind,
            reason: "only defined over a window",
        });
    }
    let si = ctx
        .i
        .sample(ui)
        .ok_or(Error::OutOfBounds { x: ui.x, y: ui.y })?;
    let sj = ctx
        .j
        .sample(uj)
        .ok_or(Error::OutOfBounds { x: uj.x, y: uj.y })?;
    Ok(pixel_residual(kind, &si, &sj, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sample with a chosen gradient and regularized gradient.
    fn px(intensity: f64, g: [f64; 2], a: [f64; 2]) -> PixelSample {
        let g_norm = g[0].hypot(g[1]);
        let a_norm = a[0].hypot(a[1]);
        PixelSample {
            intensity,
            g,
            g_norm,
            a,
            a_norm,
            scale: if a_norm > 0.0 { g_norm / a_norm } else { 1.0 },
        }
    }

    fn scalar(kind: MetricKind, si: &PixelSample, sj: &PixelSample) -> f64 {
        let params = MetricParams {
            tau: 1e-4,
            ..MetricParams::default()
        };
        pixel_residual(kind, si, sj, &params).scalar().unwrap()
    }

    #[test]
    fn sgf_identical_is_zero() {
        let p = px(0.0, [1.0, 0.0], [0.8, 0.0]);
        assert!(scalar(MetricKind::Sgf, &p, &p).abs() < 1e-15);
    }

    #[test]
    fn sgf_half_magnitude() {
        let a = px(0.0, [1.0, 0.0], [0.6, 0.0]);
        let b = px(0.0, [1.0, 0.0], [0.3, 0.0]);
        assert!((scalar(MetricKind::Sgf, &a, &b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn opposite_orientation() {
        let a = px(0.0, [1.0, 0.0], [0.8, 0.0]);
        let b = px(0.0, [-1.0, 0.0], [-0.8, 0.0]);
        assert!((scalar(MetricKind::Ugf, &a, &b) - 1.64).abs() < 1e-12);
        assert!((scalar(MetricKind::Ngf, &a, &b) - 0.5904).abs() < 1e-12);
    }

    #[test]
    fn sgf3_perpendicular() {
        let a = px(0.0, [2.0, 0.0], [0.5, 0.0]);
        let b = px(0.0, [0.0, 2.0], [0.0, 0.5]);
        assert_eq!(scalar(MetricKind::Sgf3, &a, &b), 4.0);
    }

    #[test]
    fn pm_blend() {
        let a = px(0.3, [0.05, 0.01], [0.0, 0.0]);
        let b = px(0.2, [0.03, 0.02], [0.0, 0.0]);
        // photo = 0.1, gn = (0.02, -0.01)
        assert!((scalar(MetricKind::Pm, &a, &b) - 0.037).abs() < 1e-12);
    }

    #[test]
    fn sgf2_zero_on_self_match() {
        let mut p = px(0.0, [0.3, -0.4], [0.0, 0.0]);
        p.scale = (0.25f64 + 0.1).sqrt();
        p.a = [0.3 / p.scale, -0.4 / p.scale];
        p.a_norm = 0.5 / p.scale;
        assert!(scalar(MetricKind::Sgf2, &p, &p).abs() < 1e-12);
    }

    #[test]
    fn gn_is_vector() {
        let a = px(0.0, [0.5, 0.1], [0.0, 0.0]);
        let b = px(0.0, [0.2, 0.3], [0.0, 0.0]);
        let r = pixel_residual(MetricKind::Gn, &a, &b, &MetricParams::default());
        match r {
            Residual::Vector(v) => {
                assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.2).abs() < 1e-15)
            }
            _ => panic!("expected vector"),
        }
        assert!((r.l1() - 0.5).abs() < 1e-15);
    }
}

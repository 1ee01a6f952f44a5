use serde::{Deserialize, Serialize};

use super::{plane_derivative, sample_plane, GrayImage, Point};
use crate::error::{Error, Result};

/// Floor for the per-image regularization constant, so constant images never
/// divide by zero.
pub const EPSILON_MIN: f64 = 1e-8;

/// Discrete first-derivative operator.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum GradientOperator {
    /// 3x3 Scharr kernel `[3, 10, 3]^T (x) [-1, 0, 1]`, normalized by 1/32.
    Scharr,
    /// `(I(x+1) - I(x-1)) / 2` per axis.
    #[default]
    CentralDifference,
}

/// Per-pixel image gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    norm: Vec<f64>,
    operator: GradientOperator,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn operator(&self) -> GradientOperator {
        self.operator
    }

    pub fn gx(&self) -> &[f64] {
        &self.gx
    }

    pub fn gy(&self) -> &[f64] {
        &self.gy
    }

    pub fn norms(&self) -> &[f64] {
        &self.norm
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.width + x;
        [self.gx[i], self.gy[i]]
    }

    #[inline]
    pub fn norm_at(&self, x: usize, y: usize) -> f64 {
        self.norm[y * self.width + x]
    }

    /// Bilinearly interpolated gradient at `p`.
    #[inline]
    pub fn sample(&self, p: Point) -> Option<[f64; 2]> {
        Some([
            sample_plane(&self.gx, self.width, self.height, p)?,
            sample_plane(&self.gy, self.width, self.height, p)?,
        ])
    }

    /// Spatial derivative of the interpolated field at `p`, as
    /// `[[d gx/dx, d gx/dy], [d gy/dx, d gy/dy]]`. At pixel centres this
    /// matches [`IntensityHessian::from_gradient`].
    #[inline]
    pub fn derivative(&self, p: Point) -> Option<[[f64; 2]; 2]> {
        Some([
            plane_derivative(&self.gx, self.width, self.height, p)?,
            plane_derivative(&self.gy, self.width, self.height, p)?,
        ])
    }

    pub fn mean_squared_norm(&self) -> f64 {
        self.norm.iter().map(|n| n * n).sum::<f64>() / self.norm.len() as f64
    }
}

/// Computes the image gradient with replicated-edge padding.
pub fn compute_gradient(img: &GrayImage, operator: GradientOperator) -> Result<GradientField> {
    let (w, h) = img.dimensions();
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "gradient needs at least a 3x3 image, got {w}x{h}"
        )));
    }
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let (dx, dy) = match operator {
                GradientOperator::CentralDifference => {
                    (0.5 * (p(1, 0) - p(-1, 0)), 0.5 * (p(0, 1) - p(0, -1)))
                }
                GradientOperator::Scharr => {
                    let dx = 3.0 * (p(1, -1) - p(-1, -1))
                        + 10.0 * (p(1, 0) - p(-1, 0))
                        + 3.0 * (p(1, 1) - p(-1, 1));
                    let dy = 3.0 * (p(-1, 1) - p(-1, -1))
                        + 10.0 * (p(0, 1) - p(0, -1))
                        + 3.0 * (p(1, 1) - p(1, -1));
                    (dx / 32.0, dy / 32.0)
                }
            };
            gx.push(dx);
            gy.push(dy);
        }
    }
    let norm = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    Ok(GradientField {
        width: w,
        height: h,
        gx,
        gy,
        norm,
        operator,
    })
}

/// Gradient divided by `sqrt(|g|^2 + eps)`, with `eps` the mean squared
/// gradient norm of the same image.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedGradientField {
    base: GradientField,
    epsilon: f64,
    rgx: Vec<f64>,
    rgy: Vec<f64>,
    rnorm: Vec<f64>,
}

impl RegularizedGradientField {
    pub fn base(&self) -> &GradientField {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rgx(&self) -> &[f64] {
        &self.rgx
    }

    pub fn rgy(&self) -> &[f64] {
        &self.rgy
    }

    pub fn rnorms(&self) -> &[f64] {
        &self.rnorm
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.base.width + x;
        [self.rgx[i], self.rgy[i]]
    }

    /// Regularizes an arbitrary gradient vector with this image's epsilon.
    #[inline]
    pub fn regularize(&self, g: [f64; 2]) -> [f64; 2] {
        let s = (g[0] * g[0] + g[1] * g[1] + self.epsilon).sqrt();
        [g[0] / s, g[1] / s]
    }

    /// `sqrt(|g|^2 + eps)`.
    #[inline]
    pub fn scale_of(&self, g: [f64; 2]) -> f64 {
        (g[0] * g[0] + g[1] * g[1] + self.epsilon).sqrt()
    }
}

pub fn regularize_gradient(g: GradientField) -> RegularizedGradientField {
    let epsilon = g.mean_squared_norm().max(EPSILON_MIN);
    let n = g.gx.len();
    let mut rgx = Vec::with_capacity(n);
    let mut rgy = Vec::with_capacity(n);
    let mut rnorm = Vec::with_capacity(n);
    for i in 0..n {
        let s = (g.norm[i] * g.norm[i] + epsilon).sqrt();
        rgx.push(g.gx[i] / s);
        rgy.push(g.gy[i] / s);
        rnorm.push(g.norm[i] / s);
    }
    RegularizedGradientField {
        base: g,
        epsilon,
        rgx,
        rgy,
        rnorm,
    }
}

/// Second derivatives of intensity with a single shared mixed term.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityHessian {
    width: usize,
    height: usize,
    ixx: Vec<f64>,
    ixy: Vec<f64>,
    iyy: Vec<f64>,
}

impl IntensityHessian {
    /// Derivative of a discrete gradient field by central differences
    /// (replicated edges). The mixed term is the mean of `d gx/dy` and
    /// `d gy/dx`; both agree exactly for [`GradientOperator::CentralDifference`].
    ///
    /// At pixel centres this is the derivative of the bilinearly sampled
    /// gradient field, see [`GradientField::derivative`].
    pub fn from_gradient(g: &GradientField) -> Self {
        let (w, h) = (g.width, g.height);
        let at = |plane: &[f64], x: isize, y: isize| {
            let x = x.clamp(0, w as isize - 1) as usize;
            let y = y.clamp(0, h as isize - 1) as usize;
            plane[y * w + x]
        };
        let mut ixx = Vec::with_capacity(w * h);
        let mut ixy = Vec::with_capacity(w * h);
        let mut iyy = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                ixx.push(0.5 * (at(&g.gx, x + 1, y) - at(&g.gx, x - 1, y)));
                iyy.push(0.5 * (at(&g.gy, x, y + 1) - at(&g.gy, x, y - 1)));
                let gx_y = 0.5 * (at(&g.gx, x, y + 1) - at(&g.gx, x, y - 1));
                let gy_x = 0.5 * (at(&g.gy, x + 1, y) - at(&g.gy, x - 1, y));
                ixy.push(0.5 * (gx_y + gy_x));
            }
        }
        Self {
            width: w,
            height: h,
            ixx,
            ixy,
            iyy,
        }
    }

    pub fn ixx(&self) -> &[f64] {
        &self.ixx
    }

    pub fn ixy(&self) -> &[f64] {
        &self.ixy
    }

    pub fn iyy(&self) -> &[f64] {
        &self.iyy
    }

    /// `[[ixx, ixy], [ixy, iyy]]` at an integer pixel.
    pub fn at(&self, x: usize, y: usize) -> [[f64; 2]; 2] {
        let i = y * self.width + x;
        [[self.ixx[i], self.ixy[i]], [self.ixy[i], self.iyy[i]]]
    }

    /// Bilinearly interpolated Hessian at `p`.
    pub fn sample(&self, p: Point) -> Option<[[f64; 2]; 2]> {
        let xx = sample_plane(&self.ixx, self.width, self.height, p)?;
        let xy = sample_plane(&self.ixy, self.width, self.height, p)?;
        let yy = sample_plane(&self.iyy, self.width, self.height, p)?;
        Some([[xx, xy], [xy, yy]])
    }
}

/// Intensity Hessian: `I(x+1) - 2I(x) + I(x-1)` on each axis and the mixed
/// term from successive central first differences. Replicated edges.
pub fn compute_hessian(img: &GrayImage) -> Result<IntensityHessian> {
    let (w, h) = img.dimensions();
    if w < 5 || h < 5 {
        return Err(Error::Dimension(format!(
            "hessian needs at least a 5x5 image, got {w}x{h}"
        )));
    }
    let mut ixx = Vec::with_capacity(w * h);
    let mut ixy = Vec::with_capacity(w * h);
    let mut iyy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let c = p(0, 0);
            ixx.push(p(1, 0) - 2.0 * c + p(-1, 0));
            iyy.push(p(0, 1) - 2.0 * c + p(0, -1));
            // d/dy of (d/dx I), both central.
            let dx_at = |dy: isize| 0.5 * (p(1, dy) - p(-1, dy));
            ixy.push(0.5 * (dx_at(1) - dx_at(-1)));
        }
    }
    Ok(IntensityHessian {
        width: w,
        height: h,
        ixx,
        ixy,
        iyy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, sx: f64, sy: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| 0.2 + sx * x as f64 + sy * y as f64)
    }

    fn interior(w: usize, h: usize, margin: usize) -> impl Iterator<Item = (usize, usize)> {
        (margin..h - margin).flat_map(move |y| (margin..w - margin).map(move |x| (x, y)))
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = GrayImage::constant(6, 5, 0.4);
        for op in [
            GradientOperator::Scharr,
            GradientOperator::CentralDifference,
        ] {
            let g = compute_gradient(&img, op).unwrap();
            assert!(g.gx().iter().chain(g.gy()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn operators_exact_on_affine_surfaces() {
        let img = ramp(9, 7, 0.01, -0.003);
        for op in [
            GradientOperator::Scharr,
            GradientOperator::CentralDifference,
        ] {
            let g = compute_gradient(&img, op).unwrap();
            for (x, y) in interior(9, 7, 1) {
                let [gx, gy] = g.at(x, y);
                assert!((gx - 0.01).abs() < 1e-12, "{op:?} gx={gx}");
                assert!((gy + 0.003).abs() < 1e-12, "{op:?} gy={gy}");
            }
        }
    }

    #[test]
    fn norm_matches_components() {
        let img = GrayImage::from_fn(8, 8, |x, y| ((x * x + 3 * y) % 7) as f64 / 7.0);
        let g = compute_gradient(&img, GradientOperator::Scharr).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let [a, b] = g.at(x, y);
                assert_eq!(g.norm_at(x, y), a.hypot(b));
            }
        }
    }

    #[test]
    fn too_small_for_gradient() {
        let img = GrayImage::constant(2, 5, 0.0);
        assert!(matches!(
            compute_gradient(&img, GradientOperator::Scharr),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn constant_image_epsilon_floor() {
        let g =
            compute_gradient(&GrayImage::constant(5, 5, 1.0), GradientOperator::Scharr).unwrap();
        let r = regularize_gradient(g);
        assert_eq!(r.epsilon(), EPSILON_MIN);
        assert!(r.rnorms().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pixel_at_epsilon_has_inverse_sqrt2_norm() {
        // Only the centre pixel's neighbours carry gradient. Whatever epsilon
        // turns out to be, a gradient with |g|^2 = eps regularizes to 1/sqrt(2).
        let img = GrayImage::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { 1.0 } else { 0.0 });
        let r = regularize_gradient(
            compute_gradient(&img, GradientOperator::CentralDifference).unwrap(),
        );
        let g = [r.epsilon().sqrt(), 0.0];
        let a = r.regularize(g);
        assert!((a[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn regularized_norm_below_one() {
        let img = GrayImage::from_fn(10, 10, |x, y| if x > 4 { 1.0 } else { 0.1 * y as f64 });
        let r = regularize_gradient(compute_gradient(&img, GradientOperator::Scharr).unwrap());
        for (i, &n) in r.rnorms().iter().enumerate() {
            assert!((0.0..1.0).contains(&n));
            let raw = r.base().norms()[i];
            assert!((n - raw / (raw * raw + r.epsilon()).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn hessian_of_ramp_and_quadratic() {
        let h = compute_hessian(&ramp(8, 8, 0.01, 0.02)).unwrap();
        for (x, y) in interior(8, 8, 1) {
            let m = h.at(x, y);
            assert!(m[0][0].abs() < 1e-12 && m[0][1].abs() < 1e-12 && m[1][1].abs() < 1e-12);
        }
        let q = GrayImage::from_fn(9, 6, |x, _| 0.001 * (x * x) as f64);
        let h = compute_hessian(&q).unwrap();
        for (x, y) in interior(9, 6, 1) {
            assert!((h.at(x, y)[0][0] - 0.002).abs() < 1e-12);
        }
        assert!(compute_hessian(&GrayImage::constant(4, 9, 0.0)).is_err());
    }

    #[test]
    fn gradient_hessian_matches_on_quadratics() {
        let q = GrayImage::from_fn(12, 12, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.001 * x * x + 0.0005 * x * y - 0.002 * y * y
        });
        let direct = compute_hessian(&q).unwrap();
        let g = compute_gradient(&q, GradientOperator::CentralDifference).unwrap();
        let via_grad = IntensityHessian::from_gradient(&g);
        for (x, y) in interior(12, 12, 2) {
            let (a, b) = (direct.at(x, y), via_grad.at(x, y));
            for r in 0..2 {
                for c in 0..2 {
                    assert!((a[r][c] - b[r][c]).abs() < 1e-12);
                }
            }
        }
    }
}

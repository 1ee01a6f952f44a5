use std::sync::OnceLock;

use crate::error::Result;
use crate::image::{
    compute_gradient, regularize_gradient, GradientOperator, GrayImage, IntensityHessian, Point,
    RegularizedGradientField,
};

/// One image together with its derived fields. The regularization constant
/// is estimated from this image alone.
#[derive(Debug)]
pub struct ImageFields {
    image: GrayImage,
    grad: RegularizedGradientField,
    hessian: OnceLock<IntensityHessian>,
}

/// Everything a residual needs at one location of one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub intensity: f64,
    /// Gradient `g`.
    pub g: [f64; 2],
    pub g_norm: f64,
    /// Regularized gradient `g / s`.
    pub a: [f64; 2],
    pub a_norm: f64,
    /// `s = sqrt(|g|^2 + eps)`.
    pub scale: f64,
}

impl ImageFields {
    pub fn new(image: GrayImage, operator: GradientOperator) -> Result<Self> {
        let grad = regularize_gradient(compute_gradient(&image, operator)?);
        Ok(Self {
            image,
            grad,
            hessian: OnceLock::new(),
        })
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn gradient(&self) -> &RegularizedGradientField {
        &self.grad
    }

    pub fn epsilon(&self) -> f64 {
        self.grad.epsilon()
    }

    /// Hessian consistent with the gradient field, built on first use.
    pub fn hessian(&self) -> &IntensityHessian {
        self.hessian
            .get_or_init(|| IntensityHessian::from_gradient(self.grad.base()))
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    #[inline]
    pub fn sample_at(&self, x: usize, y: usize) -> PixelSample {
        let g = self.grad.base().at(x, y);
        let g_norm = self.grad.base().norm_at(x, y);
        let a = self.grad.at(x, y);
        let scale = (g_norm * g_norm + self.grad.epsilon()).sqrt();
        PixelSample {
            intensity: self.image.get(x, y),
            g,
            g_norm,
            a,
            a_norm: g_norm / scale,
            scale,
        }
    }

    /// Sample at a continuous location. Intensity and gradient are
    /// interpolated bilinearly; the regularized gradient is recomputed from
    /// the interpolated gradient with this image's epsilon.
    #[inline]
    pub fn sample(&self, p: Point) -> Option<PixelSample> {
        if p.x.fract() == 0.0 && p.y.fract() == 0.0 && self.image.contains(p) {
            return Some(self.sample_at(p.x as usize, p.y as usize));
        }
        let intensity = self.image.sample_bilinear(p)?;
        let g = self.grad.base().sample(p)?;
        let g_norm = g[0].hypot(g[1]);
        let scale = self.grad.scale_of(g);
        Some(PixelSample {
            intensity,
            g,
            g_norm,
            a: [g[0] / scale, g[1] / scale],
            a_norm: g_norm / scale,
            scale,
        })
    }
}

/// Pair of images under comparison: `i` is the image differentiated by
/// Jacobians, `j` the one held fixed.
#[derive(Debug, Clone, Copy)]
pub struct MetricContext<'a> {
    pub i: &'a ImageFields,
    pub j: &'a ImageFields,
}

impl<'a> MetricContext<'a> {
    pub fn new(i: &'a ImageFields, j: &'a ImageFields) -> Self {
        Self { i, j }
    }

    /// The same pair with roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            i: self.j,
            j: self.i,
        }
    }
}

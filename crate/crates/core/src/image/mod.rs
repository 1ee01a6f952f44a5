//! Scalar images and the raster operations every metric builds on.

mod gradient;
pub mod io;
mod perturb;

pub use gradient::{
    compute_gradient, compute_hessian, regularize_gradient, GradientField, GradientOperator,
    IntensityHessian, RegularizedGradientField, EPSILON_MIN,
};
pub use io::{
    decode_pfm, decode_pgm, encode_pfm, encode_pgm, load_image, load_image_auto, read_pfm,
    read_png16, save_image, save_image_auto, write_pfm, write_png16, ImageFormat, PfmImage,
};
pub use perturb::{apply_perturbation, PerturbationSpec};

use crate::error::{Error, Result};

/// Continuous pixel coordinate. Integer values sit on pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

impl From<(usize, usize)> for Point {
    fn from((x, y): (usize, usize)) -> Self {
        Self::new(x as f64, y as f64)
    }
}

/// Row-major grayscale raster with nominal range [0, 1].
///
/// Values are not clamped: exposure and vignetting perturbations are allowed
/// to leave the nominal range.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Param(format!(
                "non-finite intensity at pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if a dimension is zero or `f` produces a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("from_fn produced an invalid image")
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with replicated-edge padding.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }

    /// Applies `f` to every value, keeping dimensions.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
        .expect("map produced an invalid image")
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear interpolation at `p`; `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, p: Point) -> Option<f64> {
        sample_plane(&self.data, self.width, self.height, p)
    }

    /// Derivative of the bilinear interpolant at `p`; central differences at
    /// pixel centres.
    pub fn derivative_bilinear(&self, p: Point) -> Option<[f64; 2]> {
        plane_derivative(&self.data, self.width, self.height, p)
    }

    /// Copy shifted by an integer offset: `out(x, y) = self(x - dx, y - dy)`,
    /// with replicated edges where the source falls outside.
    pub fn shifted(&self, dx: isize, dy: isize) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get_clamped(x as isize - dx, y as isize - dy)
        })
    }

    /// Subpixel translation by bilinear resampling: `out(p) = self(p - t)`.
    /// Samples falling outside the source are clamped to the border.
    pub fn translated(&self, tx: f64, ty: f64) -> Self {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        Self::from_fn(self.width, self.height, |x, y| {
            let src = Point::new(
                (x as f64 - tx).clamp(0.0, max_x),
                (y as f64 - ty).clamp(0.0, max_y),
            );
            self.sample_bilinear(src)
                .expect("clamped sample is in bounds")
        })
    }
}

/// Bilinear sample of a row-major plane. Exact at integer coordinates,
/// including the last row and column.
pub(crate) fn sample_plane(data: &[f64], width: usize, height: usize, p: Point) -> Option<f64> {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= max_x && p.y <= max_y) {
        return None;
    }
    let (x0, fx) = split_coord(p.x, width);
    let (y0, fy) = split_coord(p.y, height);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let at = |x: usize, y: usize| data[y * width + x];
    let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
    if fy == 0.0 {
        return Some(top);
    }
    let bottom = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
    Some(top + fy * (bottom - top))
}

/// Spatial derivative `[d/dx, d/dy]` of the bilinear interpolant of a plane.
///
/// Inside a cell this is exact. On grid lines, where the interpolant has a
/// kink, the two one-sided slopes are averaged, which reduces to the central
/// difference at pixel centres.
pub(crate) fn plane_derivative(
    data: &[f64],
    width: usize,
    height: usize,
    p: Point,
) -> Option<[f64; 2]> {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= max_x && p.y <= max_y) || width < 2 || height < 2 {
        return None;
    }
    let (x0, fx) = split_coord(p.x, width);
    let (y0, fy) = split_coord(p.y, height);
    let at = |x: usize, y: usize| data[y * width + x];
    // Slope along one axis at lattice index `i` (fraction `f`) of a line.
    let slope = |get: &dyn Fn(usize) -> f64, i: usize, f: f64, len: usize| {
        if f > 0.0 {
            get(i + 1) - get(i)
        } else if i == 0 {
            get(1) - get(0)
        } else if i == len - 1 {
            get(i) - get(i - 1)
        } else {
            0.5 * (get(i + 1) - get(i - 1))
        }
    };
    let y1 = (y0 + 1).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let sx0 = slope(&|x| at(x, y0), x0, fx, width);
    let sx1 = slope(&|x| at(x, y1), x0, fx, width);
    let sy0 = slope(&|y| at(x0, y), y0, fy, height);
    let sy1 = slope(&|y| at(x1, y), y0, fy, height);
    Some([sx0 + fy * (sx1 - sx0), sy0 + fx * (sy1 - sy0)])
}

#[inline]
fn split_coord(v: f64, len: usize) -> (usize, f64) {
    let i = v.floor() as usize;
    if i >= len - 1 {
        (len - 1, 0.0)
    } else {
        (i, v - i as f64)
    }
}

/// One 2x2 box-filter step; output dimensions are floored halves.
pub fn downsample(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width / 2, img.height / 2);
    if w == 0 || h == 0 {
        return Err(Error::Dimension(format!(
            "cannot downsample a {}x{} image",
            img.width, img.height
        )));
    }
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let (sx, sy) = (2 * x, 2 * y);
        0.25 * (img.get(sx, sy)
            + img.get(sx + 1, sy)
            + img.get(sx, sy + 1)
            + img.get(sx + 1, sy + 1))
    }))
}

/// Smallest side length any pyramid level may have.
pub const PYRAMID_MIN_SIDE: usize = 8;

/// Image pyramid with `levels` entries; level 0 is the input itself.
pub fn build_pyramid(img: &GrayImage, levels: usize) -> Result<Vec<GrayImage>> {
    if levels == 0 {
        return Err(Error::Param("pyramid needs at least one level".into()));
    }
    let shrink = 1usize << (levels - 1);
    if img.width / shrink < PYRAMID_MIN_SIDE || img.height / shrink < PYRAMID_MIN_SIDE {
        return Err(Error::Dimension(format!(
            "{}x{} image cannot hold {levels} pyramid levels with a {m}x{m} floor",
            img.width,
            img.height,
            m = PYRAMID_MIN_SIDE
        )));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

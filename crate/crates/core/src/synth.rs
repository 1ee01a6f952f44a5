//! Seeded synthetic scenes used by the experiments, examples and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::image::GrayImage;

/// Separable Gaussian blur with replicated edges.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let (w, h) = img.dimensions();
    let horizontal = GrayImage::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .zip(-radius..=radius)
            .map(|(k, o)| k * img.get_clamped(x as isize + o, y as isize))
            .sum()
    });
    GrayImage::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .zip(-radius..=radius)
            .map(|(k, o)| k * horizontal.get_clamped(x as isize, y as isize + o))
            .sum()
    })
}

/// Rescales values linearly onto `[lo, hi]`.
pub fn normalize_range(img: &GrayImage, lo: f64, hi: f64) -> GrayImage {
    let min = img.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span <= 0.0 {
        return GrayImage::constant(img.width(), img.height(), 0.5 * (lo + hi));
    }
    img.map(|v| lo + (hi - lo) * (v - min) / span)
}

/// Gaussian white noise blurred with `sigma` pixels, spread over [0.1, 0.9].
pub fn smooth_random(width: usize, height: usize, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = GrayImage::from_fn(width, height, |_, _| StandardNormal.sample(&mut rng));
    normalize_range(&gaussian_blur(&noise, sigma), 0.1, 0.9)
}

/// Fine-grained random texture: uniform noise lightly blurred.
pub fn noise_texture(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = GrayImage::from_fn(width, height, |_, _| rng.random::<f64>());
    normalize_range(&gaussian_blur(&noise, 0.8), 0.05, 0.95)
}

/// Piecewise-smooth indoor-like scene: shaded background, overlapping
/// rectangles and discs of different brightness, and mild surface texture.
pub fn textured_scene(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);
    let base_slope_x = rng.random_range(-0.2..0.2) / wf;
    let base_slope_y = rng.random_range(-0.2..0.2) / hf;

    enum Shape {
        Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
        Disc { cx: f64, cy: f64, r: f64 },
    }
    let mut shapes = Vec::new();
    for k in 0..14 {
        let value = rng.random_range(0.1..0.9);
        let shape = if k % 3 == 2 {
            Shape::Disc {
                cx: rng.random_range(0.0..wf),
                cy: rng.random_range(0.0..hf),
                r: rng.random_range(0.05..0.2) * wf.min(hf),
            }
        } else {
            let (cx, cy) = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
            let (hw, hh) = (
                rng.random_range(0.05..0.25) * wf,
                rng.random_range(0.05..0.25) * hf,
            );
            Shape::Rect {
                x0: cx - hw,
                y0: cy - hh,
                x1: cx + hw,
                y1: cy + hh,
            }
        };
        shapes.push((shape, value));
    }
    let texture = {
        let noise = GrayImage::from_fn(width, height, |_, _| StandardNormal.sample(&mut rng));
        normalize_range(&gaussian_blur(&noise, 1.5), -0.06, 0.06)
    };
    let scene = GrayImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = 0.45 + base_slope_x * (xf - wf / 2.0) + base_slope_y * (yf - hf / 2.0);
        for (shape, value) in &shapes {
            let inside = match *shape {
                Shape::Rect { x0, y0, x1, y1 } => xf >= x0 && xf < x1 && yf >= y0 && yf < y1,
                Shape::Disc { cx, cy, r } => (xf - cx).hypot(yf - cy) < r,
            };
            if inside {
                v = *value;
            }
        }
        v + texture.get(x, y)
    });
    // Slight blur so edges span a couple of pixels, as in rendered images.
    gaussian_blur(&scene, 0.7)
}

/// Radially symmetric paraboloid centred in the image.
pub fn paraboloid(width: usize, height: usize, curvature: f64) -> GrayImage {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    GrayImage::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        0.2 + curvature * (dx * dx + dy * dy)
    })
}

/// Horizontal layout of the two-box edge scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBoxLayout {
    pub width: usize,
    pub height: usize,
    pub background: f64,
    /// Left edge and width of the strong box.
    pub strong_x: usize,
    /// Left edge of the weak box.
    pub weak_x: usize,
    pub box_width: usize,
}

impl Default for TwoBoxLayout {
    fn default() -> Self {
        Self {
            width: 200,
            height: 21,
            background: 0.2,
            strong_x: 40,
            weak_x: 120,
            box_width: 30,
        }
    }
}

/// Two bright boxes on a flat background, one with a strong and one with a
/// weak edge; both rising edges share the same orientation. Rows are
/// identical, so the scene is effectively one-dimensional.
pub fn two_box_scene(layout: &TwoBoxLayout, strong: f64, weak: f64) -> GrayImage {
    GrayImage::from_fn(layout.width, layout.height, |x, _| {
        let in_box = |x0: usize| x >= x0 && x < x0 + layout.box_width;
        if in_box(layout.strong_x) {
            layout.background + strong
        } else if in_box(layout.weak_x) {
            layout.background + weak
        } else {
            layout.background
        }
    })
}

/// Adds seeded Gaussian noise.
pub fn add_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + sigma * n
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("same dimensions")
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

/// Synthetic photometric change: exposure, radial vignetting and noise.
///
/// The output is `V(u) * (gain * I(u) + offset) + n(u)` with
/// `V(u) = 1 - strength * min(1, r / R)^2`, `r` the distance to the image
/// center and `R = radius * half_diagonal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub exposure_gain: f64,
    pub exposure_offset: f64,
    pub vignette_strength: f64,
    pub vignette_radius: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl PerturbationSpec {
    pub const fn identity() -> Self {
        Self {
            exposure_gain: 1.0,
            exposure_offset: 0.0,
            vignette_strength: 0.0,
            vignette_radius: 1.0,
            noise_sigma: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.vignette_strength) {
            return Err(Error::Param(format!(
                "vignette strength must lie in [0, 1], got {}",
                self.vignette_strength
            )));
        }
        if self.vignette_strength > 0.0 && !(self.vignette_radius > 0.0) {
            return Err(Error::Param("vignette radius must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Param("noise sigma must be non-negative".into()));
        }
        if !self.exposure_gain.is_finite() || !self.exposure_offset.is_finite() {
            return Err(Error::Param("exposure parameters must be finite".into()));
        }
        Ok(())
    }

    /// Vignette attenuation at pixel `(x, y)` of a `width x height` image.
    pub fn attenuation(&self, width: usize, height: usize, x: usize, y: usize) -> f64 {
        if self.vignette_strength == 0.0 {
            return 1.0;
        }
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let half_diag = cx.hypot(cy).max(f64::MIN_POSITIVE);
        let r = (x as f64 - cx).hypot(y as f64 - cy);
        let t = (r / (self.vignette_radius * half_diag)).min(1.0);
        1.0 - self.vignette_strength * t * t
    }
}

pub fn apply_perturbation(img: &GrayImage, spec: &PerturbationSpec) -> Result<GrayImage> {
    spec.validate()?;
    let (w, h) = img.dimensions();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Param(e.to_string()))?;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = spec.attenuation(w, h, x, y);
            let mut out = v * (spec.exposure_gain * img.get(x, y) + spec.exposure_offset);
            if spec.noise_sigma > 0.0 {
                out += noise.sample(&mut rng);
            }
            data.push(out);
        }
    }
    GrayImage::new(w, h, data)
}

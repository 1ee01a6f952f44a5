//! Dissimilarity metrics between pixels of two images.
//!
//! The catalog runs from plain intensity differences through gradient
//! magnitude and gradient-vector differences to orientation-based costs on
//! regularized gradients. The scaled variants (`Sgf`, `Sgf2`, `Sgf3`) combine
//! orientation with magnitude so that a faint edge does not prefer to match a
//! stronger edge of the same orientation.

mod check;
mod context;
mod jacobian;
mod residual;
mod window;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use check::{check_jacobians, JacobianCheckConfig, JacobianSample, KindCheck, CHECKED_KINDS};
pub use context::{ImageFields, MetricContext, PixelSample};
pub(crate) use jacobian::jacobian_from_samples;
pub use jacobian::{jacobian_fd, jacobian_ui, relative_error};
pub use residual::{pixel_residual, residual, Residual};
pub use window::{finalize_window, pixel_terms, windowed_cost, WindowTerms};

use crate::error::{Error, Result};

/// Selects one dissimilarity function.
#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Intensity difference `I_i - I_j`.
    Photo,
    /// Absolute intensity difference (sum of absolute differences once windowed).
    Sad,
    /// Gradient magnitude difference.
    Gm,
    /// Absolute gradient magnitude difference.
    Agm,
    /// Gradient vector difference (2-vector).
    Gn,
    /// `(1 - alpha) |photo| + alpha |gn|_1`.
    Pm,
    /// One minus zero-mean normalized cross-correlation (window only).
    Ncc,
    /// Gradient magnitude baseline; same as `Agm`.
    Mag,
    /// Windowed gradient orientation, sign-blind (window only).
    Gom,
    /// `1 - (a.b)^2` on regularized gradients.
    Ngf,
    /// `1 - a.b` on regularized gradients.
    Ugf,
    /// `1 - a.b / max(|a|^2, |b|^2, tau)`.
    Sgf,
    /// `max(nij, nji) - g_i.g_j`.
    Sgf2,
    /// `|g_i| |g_j| - g_i.g_j`.
    Sgf3,
}

impl MetricKind {
    pub const ALL: [MetricKind; 14] = [
        MetricKind::Photo,
        MetricKind::Sad,
        MetricKind::Gm,
        MetricKind::Agm,
        MetricKind::Gn,
        MetricKind::Pm,
        MetricKind::Ncc,
        MetricKind::Mag,
        MetricKind::Gom,
        MetricKind::Ngf,
        MetricKind::Ugf,
        MetricKind::Sgf,
        MetricKind::Sgf2,
        MetricKind::Sgf3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Photo => "photo",
            MetricKind::Sad => "sad",
            MetricKind::Gm => "gm",
            MetricKind::Agm => "agm",
            MetricKind::Gn => "gn",
            MetricKind::Pm => "pm",
            MetricKind::Ncc => "ncc",
            MetricKind::Mag => "mag",
            MetricKind::Gom => "gom",
            MetricKind::Ngf => "ngf",
            MetricKind::Ugf => "ugf",
            MetricKind::Sgf => "sgf",
            MetricKind::Sgf2 => "sgf2",
            MetricKind::Sgf3 => "sgf3",
        }
    }

    /// Kinds only defined over a window.
    pub fn is_window_only(self) -> bool {
        matches!(self, MetricKind::Ncc | MetricKind::Gom)
    }

    /// Kinds whose residual uses regularized gradients.
    pub fn uses_regularized(self) -> bool {
        matches!(
            self,
            MetricKind::Ngf | MetricKind::Ugf | MetricKind::Sgf | MetricKind::Sgf2
        )
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        MetricKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                let names: Vec<_> = MetricKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown metric {s:?}; valid: {}", names.join(", ")))
            })
    }
}

/// Default `tau`, the floor of the `Sgf` denominator and the Ncc/Gom guard.
pub const DEFAULT_TAU: f64 = 1e-6;
/// Default `Pm` blend weight.
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    /// `Pm` weight of the gradient term, in [0, 1].
    pub alpha: f64,
    /// Positive floor preventing division by zero.
    pub tau: f64,
    /// Odd window side length.
    pub window: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
            window: 5,
        }
    }
}

impl MetricParams {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Param(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Param(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::Param(format!(
                "window must be odd, got {}",
                self.window
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.window / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names_round_trip() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
        }
        let err = "bogus".parse::<MetricKind>().unwrap_err().to_string();
        assert!(err.contains("sgf3") && err.contains("photo"));
    }

    #[test]
    fn params_validation() {
        assert!(MetricParams::default().validate().is_ok());
        assert!(MetricParams {
            alpha: 1.1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MetricParams {
            tau: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MetricParams::with_window(4).validate().is_err());
    }
}

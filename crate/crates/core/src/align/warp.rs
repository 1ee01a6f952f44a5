use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Point;

/// Smallest `|det A|` an affine warp may reach.
pub const MIN_DETERMINANT: f64 = 1e-3;

/// Parametric warp from reference to current image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpModel {
    /// `[tx, ty]`: `W(p) = p + t`.
    Translation2([f64; 2]),
    /// `[a11, a12, a21, a22, tx, ty]`: `W(p) = A p + t`.
    Affine6([f64; 6]),
}

impl Default for WarpModel {
    fn default() -> Self {
        WarpModel::Translation2([0.0; 2])
    }
}

impl WarpModel {
    pub fn translation(tx: f64, ty: f64) -> Self {
        WarpModel::Translation2([tx, ty])
    }

    pub fn affine_identity() -> Self {
        WarpModel::Affine6([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    pub fn params(&self) -> &[f64] {
        match self {
            WarpModel::Translation2(p) => p,
            WarpModel::Affine6(p) => p,
        }
    }

    pub fn len(&self) -> usize {
        self.params().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self) -> &'static str {
        match self {
            WarpModel::Translation2(_) => "translation",
            WarpModel::Affine6(_) => "affine",
        }
    }

    /// The translation part `t`.
    pub fn offset(&self) -> [f64; 2] {
        match *self {
            WarpModel::Translation2(t) => t,
            WarpModel::Affine6(p) => [p[4], p[5]],
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        match *self {
            WarpModel::Translation2(_) => [[1.0, 0.0], [0.0, 1.0]],
            WarpModel::Affine6(p) => [[p[0], p[1]], [p[2], p[3]]],
        }
    }

    pub fn determinant(&self) -> f64 {
        let a = self.matrix();
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("warp parameters must be finite".into()));
        }
        if self.determinant().abs() < MIN_DETERMINANT {
            return Err(Error::Param(format!(
                "affine matrix is near singular (det {})",
                self.determinant()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let a = self.matrix();
        let t = self.offset();
        Point::new(
            a[0][0] * p.x + a[0][1] * p.y + t[0],
            a[1][0] * p.x + a[1][1] * p.y + t[1],
        )
    }

    /// Rows of `dW/dtheta` at `p`; only the first `len()` columns are used.
    #[inline]
    pub fn jacobian(&self, p: Point) -> [[f64; 6]; 2] {
        match self {
            WarpModel::Translation2(_) => [
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            ],
            WarpModel::Affine6(_) => [
                [p.x, p.y, 0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, p.x, p.y, 0.0, 1.0],
            ],
        }
    }

    /// Additive parameter update.
    pub fn updated(&self, delta: &[f64]) -> Self {
        let mut out = *self;
        let params: &mut [f64] = match &mut out {
            WarpModel::Translation2(p) => p,
            WarpModel::Affine6(p) => p,
        };
        for (v, d) in params.iter_mut().zip(delta) {
            *v += d;
        }
        out
    }

    fn with_offset(&self, t: [f64; 2]) -> Self {
        match *self {
            WarpModel::Translation2(_) => WarpModel::Translation2(t),
            WarpModel::Affine6(mut p) => {
                p[4] = t[0];
                p[5] = t[1];
                WarpModel::Affine6(p)
            }
        }
    }

    /// `(A - I) (1/2, 1/2)`: the translation term picked up by the half-pixel
    /// offset between a level and its 2x2 box-filtered successor, where
    /// coarse pixel `c` sits at fine coordinate `2c + 1/2`.
    fn centre_shift(&self) -> [f64; 2] {
        let a = self.matrix();
        [
            0.5 * (a[0][0] - 1.0 + a[0][1]),
            0.5 * (a[1][0] + a[1][1] - 1.0),
        ]
    }

    /// The same motion expressed one pyramid level coarser.
    pub fn to_coarser(&self) -> Self {
        let t = self.offset();
        let c = self.centre_shift();
        self.with_offset([0.5 * (t[0] + c[0]), 0.5 * (t[1] + c[1])])
    }

    /// The same motion expressed one pyramid level finer.
    pub fn to_finer(&self) -> Self {
        let t = self.offset();
        let c = self.centre_shift();
        self.with_offset([2.0 * t[0] - c[0], 2.0 * t[1] - c[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translations_halve_and_double() {
        let w = WarpModel::translation(3.0, -1.0);
        assert_eq!(w.to_coarser(), WarpModel::translation(1.5, -0.5));
        assert_eq!(w.to_coarser().to_finer(), w);
    }

    #[test]
    fn level_change_commutes_with_sampling_grid() {
        let w = WarpModel::Affine6([1.1, 0.05, -0.02, 0.95, 2.0, -3.0]);
        let coarse = w.to_coarser();
        let c = Point::new(7.0, 4.0);
        let fine = Point::new(2.0 * c.x + 0.5, 2.0 * c.y + 0.5);
        let wf = w.apply(fine);
        let wc = coarse.apply(c);
        assert!((2.0 * wc.x + 0.5 - wf.x).abs() < 1e-12);
        assert!((2.0 * wc.y + 0.5 - wf.y).abs() < 1e-12);
        let back = coarse.to_finer();
        for (a, b) in back.params().iter().zip(w.params()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_jacobian_matches_finite_differences() {
        let w = WarpModel::Affine6([1.0, 0.1, 0.2, 0.9, 1.0, 2.0]);
        let p = Point::new(3.0, -2.0);
        let j = w.jacobian(p);
        for k in 0..6 {
            let mut d = [0.0; 6];
            d[k] = 1e-6;
            let q = w.updated(&d).apply(p);
            let q0 = w.apply(p);
            assert!(((q.x - q0.x) / 1e-6 - j[0][k]).abs() < 1e-6);
            assert!(((q.y - q0.y) / 1e-6 - j[1][k]).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_affine_is_rejected() {
        assert!(WarpModel::Affine6([1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
            .validate()
            .is_err());
        assert!(WarpModel::affine_identity().validate().is_ok());
    }
}

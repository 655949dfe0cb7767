//! Quadrature version of the real-line example: `R x Z` acting on `R` by
//! `(x, n).b = x + n + b`, with the stabilizer direction truncated to
//! `|n| <= N` and the translations sampled at spacing `dx`.
//!
//! The kernel lives on the three bands `|c - b - i| <= eps`, `i in {-1, 0, 1}`,
//! with constant weight `p_i` per band. The lifted filter is supported on
//! the segments `[i - eps, i + eps] x {0}`, so its cross-correlation at the
//! identity is a Riemann sum of the orbitwise transform. The transform of
//! `f = cos` is known in closed form, which makes the discretization error
//! directly measurable.

use crate::error::{Error, Result};

/// Band half-width.
pub const EPS: f64 = 0.5;
/// Base points at which the residual is evaluated.
pub const PROBES: [f64; 3] = [0.0, 0.7, 1.9];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineGrid {
    pub truncation: usize,
    pub spacing: f64,
}

impl LineGrid {
    pub fn new(truncation: usize, spacing: f64) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::Domain("line grid truncation must keep the three bands (N >= 1)".into()));
        }
        if !(spacing > 0.0 && spacing <= EPS) {
            return Err(Error::Domain(format!("grid spacing must lie in (0, {EPS}], got {spacing}")));
        }
        Ok(LineGrid { truncation, spacing })
    }

    pub fn refined(&self) -> LineGrid {
        LineGrid { truncation: self.truncation, spacing: self.spacing / 2.0 }
    }

    /// Weight of band `i`.
    pub fn band_weight(i: i64) -> f64 {
        1.0 + 0.5 * (i + 1) as f64
    }

    fn bands(&self) -> impl Iterator<Item = i64> {
        let n = self.truncation as i64;
        (-1i64..=1).filter(move |i| i.abs() <= n)
    }

    /// `(omega * f~)(e, b)`: counting measure times `dx` over the grid points
    /// of each closed segment.
    pub fn lifted(&self, b: f64) -> f64 {
        let half = (EPS / self.spacing + 1e-9).floor() as i64;
        let mut total = 0.0;
        for i in self.bands() {
            let mut band = 0.0;
            for j in -half..=half {
                band += (b + i as f64 + j as f64 * self.spacing).cos();
            }
            total += Self::band_weight(i) * band * self.spacing;
        }
        total
    }

    /// The orbitwise transform `sum_i p_i int_{|t| <= eps} cos(b + i + t) dt`.
    pub fn transform(&self, b: f64) -> f64 {
        self.bands()
            .map(|i| {
                let x = b + i as f64;
                Self::band_weight(i) * ((x + EPS).sin() - (x - EPS).sin())
            })
            .sum()
    }

    /// Largest `|lifted - transform|` over the probe points.
    pub fn residual(&self) -> f64 {
        PROBES.iter().map(|&b| (self.lifted(b) - self.transform(b)).abs()).fold(0.0, f64::max)
    }

    /// Residuals along `steps` successive halvings, starting at this grid.
    pub fn ladder(&self, steps: usize) -> Vec<(f64, f64)> {
        let mut grid = *self;
        let mut out = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            out.push((grid.spacing, grid.residual()));
            grid = grid.refined();
        }
        out
    }

    /// Largest jump of the lifted output between neighbouring grid base points;
    /// it stays bounded under refinement.
    pub fn neighbour_jump(&self) -> f64 {
        (0..16)
            .map(|k| {
                let b = k as f64 * self.spacing;
                (self.lifted(b + self.spacing) - self.lifted(b)).abs()
            })
            .fold(0.0, f64::max)
    }
}

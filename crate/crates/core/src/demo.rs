//! Stabilizer-size scaling of bi-equivariant filters versus filters lifted from kernels.
//!
//! On `torus(N)` every stabilizer has `N` elements. A filter that is
//! constant along stabilizer cosets, `omega'(x, y) = phi(x + y)`, sums the
//! same contribution once per stabilizer element, so its output grows like
//! `N`. The filter lifted from the kernel `kappa(c, b) = phi(c - b)` touches
//! each coset once and its output does not depend on `N`.

use std::sync::Arc;

use serde::Serialize;

use crate::bundle::{section_to_mackey, EquivariantBundle, Section};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::{construct_normalized_families, PsiFunction};
use crate::scenario::torus_action;
use crate::transform::{dirac_delta, lift_kernel_to_filter, Kernel, ThetaMap};
use crate::xcorr::{correlate_at, Filter};

/// Relative spread allowed in `output / N`.
pub const RATIO_TOLERANCE: f64 = 1e-9;
/// Absolute spread allowed in the lifted output.
pub const LIFT_TOLERANCE: f64 = 1e-12;

/// Signed representative of `x` modulo `n`.
fn signed(x: usize, n: usize) -> i64 {
    let r = (x % n) as i64;
    if 2 * r > n as i64 {
        r - n as i64
    } else {
        r
    }
}

/// Nonnegative profile supported on `|x| <= 1`.
pub fn profile(x: i64) -> f64 {
    match x {
        0 => 1.0,
        1 => 0.5,
        -1 => 0.25,
        _ => 0.0,
    }
}

/// Fixed test function, identical near the origin for every `N`.
pub fn test_function(x: i64) -> f64 {
    (-((x * x) as f64)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegeneracyRow {
    pub n: usize,
    pub bi_equivariant: f64,
    pub ratio: f64,
    pub lifted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegeneracyTable {
    pub rows: Vec<DegeneracyRow>,
    /// Largest relative deviation of `output / N` from the first row.
    pub ratio_spread: f64,
    /// Largest absolute deviation of the lifted output from the first row.
    pub lifted_spread: f64,
}

impl DegeneracyTable {
    pub fn passed(&self) -> bool {
        self.ratio_spread <= RATIO_TOLERANCE && self.lifted_spread <= LIFT_TOLERANCE
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:>6}  {:>14}  {:>14}  {:>14}\n", "N", "bi-equivariant", "output/N", "lifted");
        for r in &self.rows {
            out.push_str(&format!("{:>6}  {:>14.9}  {:>14.9}  {:>14.9}\n", r.n, r.bi_equivariant, r.ratio, r.lifted));
        }
        out.push_str(&format!("ratio spread {:.3e}, lifted spread {:.3e}\n", self.ratio_spread, self.lifted_spread));
        out
    }
}

/// Scales the bi-equivariant profile by `scale` (0 gives the trivial branch).
pub fn degeneracy_demo_scaled(sizes: &[usize], scale: f64) -> Result<DegeneracyTable> {
    if sizes.len() < 2 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("sizes must be strictly ascending with at least two entries".into()));
    }
    if sizes[0] < 3 {
        return Err(Error::Domain("sizes must be at least 3 so the profile does not wrap".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let action = torus_action(n, 1)?;
        let bundle = Arc::new(EquivariantBundle::trivial(action.clone(), 1));
        let fam = construct_normalized_families(&PsiFunction::identity_indicator(action.clone()))?;
        let f = Section::from_fn(bundle.clone(), |b, _| test_function(signed(b, n)));
        let m = section_to_mackey(&f);
        let e = action.group().identity();

        let bi = Filter::from_fn(bundle.clone(), bundle.clone(), |h, _| {
            let v = scale * profile(signed(h % n + h / n, n));
            (v != 0.0).then(|| Matrix::scalar(v))
        })?;
        let bi_out = correlate_at(&bi, &m, &fam.mu, e, 0)?[0];

        let kappa =
            Kernel::from_fn(bundle.clone(), bundle.clone(), |c, b| {
                let v = profile(signed(c + n - b, n));
                (v != 0.0).then(|| Matrix::scalar(v))
            })?;
        let theta = ThetaMap::for_kernel(&kappa, |c, b| (c + n - b) % n)?;
        let omega = lift_kernel_to_filter(&kappa, &theta, &dirac_delta(&fam.nu)?)?;
        let lifted = correlate_at(&omega, &m, &fam.mu, e, 0)?[0];

        rows.push(DegeneracyRow { n, bi_equivariant: bi_out, ratio: bi_out / n as f64, lifted });
    }
    let r0 = rows[0].ratio;
    let ratio_spread = rows
        .iter()
        .map(|r| if r0 == 0.0 { r.ratio.abs() } else { ((r.ratio - r0) / r0).abs() })
        .fold(0.0, f64::max);
    let l0 = rows[0].lifted;
    let lifted_spread = rows.iter().map(|r| (r.lifted - l0).abs()).fold(0.0, f64::max);
    Ok(DegeneracyTable { rows, ratio_spread, lifted_spread })
}

pub fn degeneracy_demo(sizes: &[usize]) -> Result<DegeneracyTable> {
    degeneracy_demo_scaled(sizes, 1.0)
}

//! Compatible measure families on the group, the stabilizers and the orbits.
//!
//! On a finite group every measure is a nonnegative weight table. The three
//! families are tied together by the decomposition
//!
//! ```text
//! sum_h mu_b(h) f(h) = sum_{c in G.b} mubar_b(c) sum_{h in G_b} nu_b(h) f(k_c h)
//! ```
//!
//! where `k_c` is any element with `k_c.b = c`. Finite groups are unimodular,
//! so the modular function is identically one and the normalizing scale of
//! the construction from a conjugation-invariant weight `psi` is a constant.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::{CosetSection, GroupAction};
use crate::report::{witness, ValidationReport};
use crate::transform::DeltaFunction;

fn check_weights(values: &[f64]) -> Result<()> {
    match values.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        Some(w) => Err(Error::Domain(format!("measure weights must be finite and nonnegative, got {w}"))),
        None => Ok(()),
    }
}

fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &w| (l.min(w), h.max(w)));
    if values.is_empty() { 0.0 } else { hi - lo }
}

/// `mu_b` on the whole group for every base point.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMeasureFamily {
    action: Arc<GroupAction>,
    weights: Vec<f64>,
}

impl GroupMeasureFamily {
    /// `rows[b][h]` is the weight of `mu_b` at `h`.
    pub fn new(action: Arc<GroupAction>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let (ng, nb) = (action.group().order(), action.base_size());
        if rows.len() != nb || rows.iter().any(|r| r.len() != ng) {
            return Err(Error::Structural(format!("group measure family must be {nb} rows of {ng} weights")));
        }
        let weights = rows.concat();
        check_weights(&weights)?;
        Ok(GroupMeasureFamily { action, weights })
    }

    /// Constant weight `scale` everywhere; a grid spacing here encodes Lebesgue quadrature.
    pub fn counting(action: Arc<GroupAction>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("counting measure scale must be positive, got {scale}")));
        }
        let len = action.group().order() * action.base_size();
        Ok(GroupMeasureFamily { action, weights: vec![scale; len] })
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    #[inline]
    pub fn weight(&self, b: usize, h: usize) -> f64 {
        self.weights[b * self.action.group().order() + h]
    }

    pub fn row(&self, b: usize) -> &[f64] {
        let ng = self.action.group().order();
        &self.weights[b * ng..(b + 1) * ng]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.action.base_size()).map(|b| self.row(b).to_vec()).collect()
    }

    /// Each `mu_b` is a Haar measure, i.e. constant in `h`. On a finite group
    /// this is the same as left invariance.
    pub fn is_haar(&self) -> bool {
        (0..self.action.base_size()).all(|b| spread(self.row(b)) == 0.0)
    }

    pub fn is_left_invariant(&self) -> bool {
        self.is_haar()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let weights: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        check_weights(&weights)?;
        Ok(GroupMeasureFamily { action: self.action.clone(), weights })
    }

    /// `mu_{g.b}(g h g^-1) = mu_b(h)`.
    pub fn validate(&self, tolerance: f64) -> ValidationReport {
        let action = &self.action;
        let group = action.group();
        let mut report = ValidationReport::new("mu_conjugation", tolerance);
        for g in 0..group.order() {
            for b in 0..action.base_size() {
                let gb = action.act(g, b);
                for h in 0..group.order() {
                    let dev = self.weight(gb, group.conj(g, h)) - self.weight(b, h);
                    report.record(dev, || witness(&[("g", g), ("h", h), ("b", b)]));
                }
            }
        }
        report
    }
}

/// `nu_b` on the stabilizer `G_b`; weights are parallel to the ascending stabilizer list.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizerMeasureFamily {
    action: Arc<GroupAction>,
    weights: Vec<Vec<f64>>,
}

impl StabilizerMeasureFamily {
    pub fn new(action: Arc<GroupAction>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let nb = action.base_size();
        if rows.len() != nb {
            return Err(Error::Structural(format!("stabilizer family needs {nb} rows, got {}", rows.len())));
        }
        for (b, r) in rows.iter().enumerate() {
            if r.len() != action.stabilizer_of(b).len() {
                return Err(Error::Structural(format!(
                    "stabilizer weights at b={b}: {} entries for a stabilizer of size {}",
                    r.len(),
                    action.stabilizer_of(b).len()
                )));
            }
            check_weights(r)?;
        }
        Ok(StabilizerMeasureFamily { action, weights: rows })
    }

    pub fn counting(action: Arc<GroupAction>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("counting measure scale must be positive, got {scale}")));
        }
        let rows = (0..action.base_size()).map(|b| vec![scale; action.stabilizer_of(b).len()]).collect();
        Ok(StabilizerMeasureFamily { action, weights: rows })
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    /// Weights parallel to `action.stabilizer_of(b)`.
    pub fn row(&self, b: usize) -> &[f64] {
        &self.weights[b]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `nu_b(h)`, or `None` when `h` does not fix `b`.
    pub fn weight(&self, b: usize, h: usize) -> Option<f64> {
        let stab = self.action.stabilizer_of(b);
        stab.binary_search(&h).ok().map(|i| self.weights[b][i])
    }

    pub fn total(&self, b: usize) -> f64 {
        self.weights[b].iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = self.weights.iter().map(|r| r.iter().map(|w| w * factor).collect()).collect();
        StabilizerMeasureFamily::new(self.action.clone(), rows)
    }

    /// `nu_{g.b}(g h g^-1) = nu_b(h)` for `h` in `G_b`.
    pub fn validate_conjugation(&self, tolerance: f64) -> ValidationReport {
        let action = &self.action;
        let group = action.group();
        let mut report = ValidationReport::new("nu_conjugation", tolerance);
        for g in 0..group.order() {
            for b in 0..action.base_size() {
                let gb = action.act(g, b);
                for (&h, &w) in action.stabilizer_of(b).iter().zip(&self.weights[b]) {
                    let conj = self.weight(gb, group.conj(g, h)).unwrap_or(f64::INFINITY);
                    report.record(conj - w, || witness(&[("g", g), ("h", h), ("b", b)]));
                }
            }
        }
        report
    }

    /// Spread of each `nu_b`; left invariance on a finite group forces it to vanish.
    pub fn validate_left_invariance(&self, tolerance: f64) -> ValidationReport {
        let mut report = ValidationReport::new("nu_left_invariance", tolerance);
        for (b, row) in self.weights.iter().enumerate() {
            report.record(spread(row), || witness(&[("b", b)]));
        }
        report
    }
}

/// `mubar_b` on the orbit `G.b`; weights are parallel to the ascending orbit list.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitMeasureFamily {
    action: Arc<GroupAction>,
    weights: Vec<Vec<f64>>,
}

impl OrbitMeasureFamily {
    pub fn new(action: Arc<GroupAction>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let nb = action.base_size();
        if rows.len() != nb {
            return Err(Error::Structural(format!("orbit family needs {nb} rows, got {}", rows.len())));
        }
        for (b, r) in rows.iter().enumerate() {
            if r.len() != action.orbit_members(b).len() {
                return Err(Error::Structural(format!(
                    "orbit weights at b={b}: {} entries for an orbit of size {}",
                    r.len(),
                    action.orbit_members(b).len()
                )));
            }
            check_weights(r)?;
        }
        Ok(OrbitMeasureFamily { action, weights: rows })
    }

    pub fn counting(action: Arc<GroupAction>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("counting measure scale must be positive, got {scale}")));
        }
        let rows = (0..action.base_size()).map(|b| vec![scale; action.orbit_members(b).len()]).collect();
        Ok(OrbitMeasureFamily { action, weights: rows })
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    /// Weights parallel to `action.orbit_members(b)`.
    pub fn row(&self, b: usize) -> &[f64] {
        &self.weights[b]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weight(&self, b: usize, c: usize) -> Option<f64> {
        let orbit = self.action.orbit_members(b);
        orbit.binary_search(&c).ok().map(|i| self.weights[b][i])
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.min_weight() > 0.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = self.weights.iter().map(|r| r.iter().map(|w| w * factor).collect()).collect();
        OrbitMeasureFamily::new(self.action.clone(), rows)
    }

    /// `mubar_{g.b}(g.c) = mubar_b(c)`.
    pub fn validate(&self, tolerance: f64) -> ValidationReport {
        let action = &self.action;
        let mut report = ValidationReport::new("mubar_pushforward", tolerance);
        for g in 0..action.group().order() {
            for b in 0..action.base_size() {
                let gb = action.act(g, b);
                for (&c, &w) in action.orbit_members(b).iter().zip(&self.weights[b]) {
                    let moved = self.weight(gb, action.act(g, c)).unwrap_or(f64::INFINITY);
                    report.record(moved - w, || witness(&[("g", g), ("b", b), ("c", c)]));
                }
            }
        }
        report
    }
}

/// Residuals of all compatibility axioms of a triple of families.
#[derive(Clone, Debug)]
pub struct FamilyValidation {
    pub mu_conjugation: ValidationReport,
    pub nu_conjugation: ValidationReport,
    pub nu_left_invariance: ValidationReport,
    pub mubar_pushforward: ValidationReport,
}

impl FamilyValidation {
    pub fn reports(&self) -> [&ValidationReport; 4] {
        [&self.mu_conjugation, &self.nu_conjugation, &self.nu_left_invariance, &self.mubar_pushforward]
    }

    pub fn is_ok(&self) -> bool {
        self.reports().iter().all(|r| r.is_ok())
    }
}

pub fn validate_families(
    mu: &GroupMeasureFamily,
    nu: &StabilizerMeasureFamily,
    mubar: &OrbitMeasureFamily,
    tolerance: f64,
) -> Result<FamilyValidation> {
    if *mu.action() != *nu.action() || *mu.action() != *mubar.action() {
        return Err(Error::Structural("measure families refer to different actions".into()));
    }
    Ok(FamilyValidation {
        mu_conjugation: mu.validate(tolerance),
        nu_conjugation: nu.validate_conjugation(tolerance),
        nu_left_invariance: nu.validate_left_invariance(tolerance),
        mubar_pushforward: mubar.validate(tolerance),
    })
}

/// `|sum_h mu_b(h) f(h) - sum_c mubar_b(c) sum_{h in G_b} nu_b(h) f(k_c h)|`
/// with the smallest-index coset representatives.
pub fn check_fubini(
    mu: &GroupMeasureFamily,
    nu: &StabilizerMeasureFamily,
    mubar: &OrbitMeasureFamily,
    f: &[f64],
    b: usize,
) -> Result<f64> {
    let reps = mu.action().coset_section(b)?;
    check_fubini_with_reps(mu, nu, mubar, f, &reps)
}

/// As [`check_fubini`], with caller-supplied representatives.
pub fn check_fubini_with_reps(
    mu: &GroupMeasureFamily,
    nu: &StabilizerMeasureFamily,
    mubar: &OrbitMeasureFamily,
    f: &[f64],
    reps: &CosetSection,
) -> Result<f64> {
    let action = mu.action();
    let group = action.group();
    let b = reps.anchor;
    if f.len() != group.order() {
        return Err(Error::Structural(format!("test function has {} values for {} elements", f.len(), group.order())));
    }
    let lhs: f64 = mu.row(b).iter().zip(f).map(|(w, x)| w * x).sum();
    let mut rhs = 0.0;
    for (&c, &wbar) in action.orbit_members(b).iter().zip(mubar.row(b)) {
        let k = reps.rep(c).ok_or_else(|| Error::Structural(format!("no representative for c={c}")))?;
        if action.act(k, b) != c {
            return Err(Error::Precondition(format!("representative {k} does not carry {b} to {c}")));
        }
        let inner: f64 = action
            .stabilizer_of(b)
            .iter()
            .zip(nu.row(b))
            .map(|(&h, &w)| w * f[group.mul(k, h)])
            .sum();
        rhs += wbar * inner;
    }
    Ok((lhs - rhs).abs())
}

/// Complete check of the decomposition identity: both sides are linear in
/// `f`, so it holds for all `f` iff it holds on point indicators, where it
/// reads `mu_b(g) = mubar_b(g.b) nu_b(k^-1 g)`.
pub fn fubini_defect(
    mu: &GroupMeasureFamily,
    nu: &StabilizerMeasureFamily,
    mubar: &OrbitMeasureFamily,
    tolerance: f64,
) -> ValidationReport {
    let action = mu.action();
    let group = action.group();
    let mut report = ValidationReport::new("fubini_identity", tolerance);
    for b in 0..action.base_size() {
        for g in 0..group.order() {
            let c = action.act(g, b);
            let k = action.rep(b, c).expect("g.b lies in the orbit of b");
            let rhs = mubar.weight(b, c).unwrap_or(0.0) * nu.weight(b, group.mul(group.inv(k), g)).unwrap_or(0.0);
            report.record(mu.weight(b, g) - rhs, || witness(&[("b", b), ("g", g)]));
        }
    }
    report
}

/// Orbit weights making the decomposition hold, from the coset indicator
/// basis: `mubar_b(c) = mu_b(k_c G_b) / nu_b(G_b)`.
pub fn solve_orbit_measure(mu: &GroupMeasureFamily, nu: &StabilizerMeasureFamily, b: usize) -> Result<Vec<f64>> {
    let action = mu.action();
    if b >= action.base_size() {
        return Err(Error::Structural(format!("base point {b} out of range")));
    }
    let group = action.group();
    let nu_total = nu.total(b);
    if nu_total <= 0.0 {
        return Err(Error::DegenerateMeasure { b, reason: "stabilizer measure vanishes identically".into() });
    }
    if spread(mu.row(b)) != 0.0 {
        return Err(Error::Precondition(format!("mu_{b} is not a Haar measure")));
    }
    let stab = action.stabilizer_of(b);
    Ok(action
        .orbit_members(b)
        .iter()
        .map(|&c| {
            let k = action.rep(b, c).expect("orbit member has a representative");
            let coset_mass: f64 = stab.iter().map(|&h| mu.weight(b, group.mul(k, h))).sum();
            coset_mass / nu_total
        })
        .collect())
}

pub fn solve_orbit_family(mu: &GroupMeasureFamily, nu: &StabilizerMeasureFamily) -> Result<OrbitMeasureFamily> {
    let rows = (0..mu.action().base_size()).map(|b| solve_orbit_measure(mu, nu, b)).collect::<Result<Vec<_>>>()?;
    OrbitMeasureFamily::new(mu.action().clone(), rows)
}

/// A conjugation-invariant nonnegative weight `psi(h, b)` used to normalize
/// the measure families.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiFunction {
    action: Arc<GroupAction>,
    /// `values[h * |B| + b]`.
    values: Vec<f64>,
    /// Modular function; identically one on finite groups.
    pub modular: f64,
    /// Constant scaling field (unimodular case).
    pub lambda: f64,
}

impl PsiFunction {
    /// `rows[h][b]`.
    pub fn new(action: Arc<GroupAction>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let (ng, nb) = (action.group().order(), action.base_size());
        if rows.len() != ng || rows.iter().any(|r| r.len() != nb) {
            return Err(Error::Structural(format!("psi must be {ng} rows of {nb} values")));
        }
        let values = rows.concat();
        check_weights(&values)?;
        Ok(PsiFunction { action, values, modular: 1.0, lambda: 1.0 })
    }

    /// `psi(h, b) = psi0(h)` for a class function `psi0`.
    pub fn from_class_function(action: Arc<GroupAction>, psi0: &[f64]) -> Result<Self> {
        let (ng, nb) = (action.group().order(), action.base_size());
        if psi0.len() != ng {
            return Err(Error::Structural(format!("psi0 has {} values for {ng} elements", psi0.len())));
        }
        check_weights(psi0)?;
        let values = (0..ng * nb).map(|i| psi0[i / nb]).collect();
        Ok(PsiFunction { action, values, modular: 1.0, lambda: 1.0 })
    }

    /// `psi0` = indicator of the identity.
    pub fn identity_indicator(action: Arc<GroupAction>) -> Self {
        let group = action.group();
        let psi0: Vec<f64> = (0..group.order()).map(|h| if h == group.identity() { 1.0 } else { 0.0 }).collect();
        PsiFunction::from_class_function(action, &psi0).expect("indicator is a valid class function")
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    #[inline]
    pub fn value(&self, h: usize, b: usize) -> f64 {
        self.values[h * self.action.base_size() + b]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let nb = self.action.base_size();
        self.values.chunks(nb.max(1)).map(|c| c.to_vec()).take(self.action.group().order()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|v| v * factor).collect();
        check_weights(&values)?;
        Ok(PsiFunction { values, ..self.clone() })
    }

    /// Sum over the whole group at `b`.
    pub fn group_mass(&self, b: usize) -> f64 {
        (0..self.action.group().order()).map(|h| self.value(h, b)).sum()
    }

    /// Sum over the stabilizer of `b`.
    pub fn stabilizer_mass(&self, b: usize) -> f64 {
        self.action.stabilizer_of(b).iter().map(|&h| self.value(h, b)).sum()
    }

    /// Conjugation invariance `psi(g h g^-1, g.b) = psi(h, b)`, plus
    /// nonvanishing on the group and on every stabilizer.
    pub fn validate(&self, tolerance: f64) -> ValidationReport {
        let action = &self.action;
        let group = action.group();
        let mut report = ValidationReport::new("psi_invariance", tolerance);
        for g in 0..group.order() {
            for b in 0..action.base_size() {
                let gb = action.act(g, b);
                for h in 0..group.order() {
                    let dev = self.value(group.conj(g, h), gb) - self.value(h, b);
                    report.record(dev, || witness(&[("g", g), ("h", h), ("b", b)]));
                }
            }
        }
        for b in 0..action.base_size() {
            if self.group_mass(b) <= 0.0 || self.stabilizer_mass(b) <= 0.0 {
                report.record(f64::INFINITY, || witness(&[("vanishes_at", b)]));
            }
        }
        report
    }
}

/// Families produced from `psi`, with the recorded constant fields.
#[derive(Clone, Debug)]
pub struct NormalizedFamilies {
    pub mu: GroupMeasureFamily,
    pub nu: StabilizerMeasureFamily,
    pub mubar: OrbitMeasureFamily,
    pub modular: f64,
    pub lambda: f64,
}

/// Counting measures rescaled so that `sum_G psi mu_b = 1` and
/// `sum_{G_b} psi nu_b = 1`, with the orbit family solved from both.
pub fn construct_normalized_families(psi: &PsiFunction) -> Result<NormalizedFamilies> {
    let check = psi.validate(1e-9);
    if !check.is_ok() {
        return Err(Error::Precondition(format!("psi is not a valid weight: {check}")));
    }
    let action = psi.action().clone();
    let (ng, nb) = (action.group().order(), action.base_size());
    let mut mu_rows = Vec::with_capacity(nb);
    let mut nu_rows = Vec::with_capacity(nb);
    for b in 0..nb {
        let z = psi.group_mass(b);
        let z_stab = psi.stabilizer_mass(b);
        if z <= 0.0 || z_stab <= 0.0 {
            return Err(Error::Precondition(format!("psi vanishes at base point {b}")));
        }
        mu_rows.push(vec![1.0 / z; ng]);
        nu_rows.push(vec![1.0 / z_stab; action.stabilizer_of(b).len()]);
    }
    let mu = GroupMeasureFamily::new(action.clone(), mu_rows)?;
    let nu = StabilizerMeasureFamily::new(action, nu_rows)?;
    let mubar = solve_orbit_family(&mu, &nu)?;
    Ok(NormalizedFamilies { mu, nu, mubar, modular: psi.modular, lambda: psi.lambda })
}

/// Residual of `sum_G psi mu_b = 1` and `sum_{G_b} psi nu_b = 1`.
pub fn psi_normalization(psi: &PsiFunction, mu: &GroupMeasureFamily, nu: &StabilizerMeasureFamily, tolerance: f64) -> ValidationReport {
    let action = psi.action();
    let mut report = ValidationReport::new("psi_normalization", tolerance);
    for b in 0..action.base_size() {
        let group_sum: f64 = (0..action.group().order()).map(|h| psi.value(h, b) * mu.weight(b, h)).sum();
        report.record(group_sum - 1.0, || witness(&[("group_at", b)]));
        let stab_sum: f64 =
            action.stabilizer_of(b).iter().zip(nu.row(b)).map(|(&h, &w)| psi.value(h, b) * w).sum();
        report.record(stab_sum - 1.0, || witness(&[("stabilizer_at", b)]));
    }
    report
}

/// Restricts `psi` to the stabilizers, giving a normalized weight `delta`.
pub fn restrict_psi_to_delta(psi: &PsiFunction, nu: &StabilizerMeasureFamily, tolerance: f64) -> Result<DeltaFunction> {
    let action = psi.action();
    let mut rows = Vec::with_capacity(action.base_size());
    for b in 0..action.base_size() {
        let row: Vec<f64> = action.stabilizer_of(b).iter().map(|&h| psi.value(h, b)).collect();
        let norm: f64 = row.iter().zip(nu.row(b)).map(|(d, w)| d * w).sum();
        if (norm - 1.0).abs() > tolerance {
            return Err(Error::Precondition(format!(
                "psi restricted to the stabilizer of {b} integrates to {norm}, not 1"
            )));
        }
        rows.push(row);
    }
    DeltaFunction::new(action.clone(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::FiniteGroup;
    use crate::rng::SeededRng;

    fn torus(n: usize) -> Arc<GroupAction> {
        let g = FiniteGroup::product(&FiniteGroup::cyclic(n), &FiniteGroup::cyclic(n));
        Arc::new(GroupAction::from_fn(g, n, |x, b| (x % n + x / n + b) % n).unwrap())
    }

    fn z4() -> Arc<GroupAction> {
        Arc::new(GroupAction::regular(FiniteGroup::cyclic(4)))
    }

    fn counting(a: &Arc<GroupAction>) -> (GroupMeasureFamily, StabilizerMeasureFamily, OrbitMeasureFamily) {
        let mu = GroupMeasureFamily::counting(a.clone(), 1.0).unwrap();
        let nu = StabilizerMeasureFamily::counting(a.clone(), 1.0).unwrap();
        let mubar = solve_orbit_family(&mu, &nu).unwrap();
        (mu, nu, mubar)
    }

    #[test]
    fn counting_family_basics() {
        let mu = GroupMeasureFamily::counting(z4(), 1.0).unwrap();
        assert!(mu.rows().iter().flatten().all(|&w| w == 1.0));
        assert_eq!(mu.validate(0.0).max_violation, 0.0);
        assert!(GroupMeasureFamily::counting(z4(), 0.0).is_err());
        assert!(GroupMeasureFamily::counting(z4(), -1.0).is_err());
        let grid = GroupMeasureFamily::counting(z4(), 0.25).unwrap();
        assert!(grid.is_haar());
        assert_eq!(grid.weight(2, 3), 0.25);
    }

    #[test]
    fn bumped_weights_are_detected() {
        let a = z4();
        let (mu, nu, mubar) = counting(&a);
        let mut rows = mu.rows();
        rows[1][2] += 0.125;
        let bumped = GroupMeasureFamily::new(a.clone(), rows).unwrap();
        let v = validate_families(&bumped, &nu, &mubar, 1e-12).unwrap();
        assert!((v.mu_conjugation.max_violation - 0.125).abs() < 1e-15);
        assert!(v.nu_conjugation.is_ok() && v.mubar_pushforward.is_ok());

        let t = torus(2);
        let mut nu_rows = StabilizerMeasureFamily::counting(t.clone(), 1.0).unwrap().rows().to_vec();
        nu_rows[0][1] = 3.0;
        let nu = StabilizerMeasureFamily::new(t, nu_rows).unwrap();
        assert_eq!(nu.validate_left_invariance(1e-12).max_violation, 2.0);
    }

    #[test]
    fn fubini_for_counting_families() {
        let mut rng = SeededRng::new(9);
        for a in [z4(), torus(8)] {
            let (mu, nu, mubar) = counting(&a);
            assert!(mubar.rows().iter().flatten().all(|&w| w == 1.0));
            assert!(fubini_defect(&mu, &nu, &mubar, 0.0).is_ok());
            for b in 0..a.base_size() {
                let f = rng.vec(a.group().order());
                assert!(check_fubini(&mu, &nu, &mubar, &f, b).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn doubled_orbit_measure_leaves_the_full_sum_as_residual() {
        let a = torus(8);
        let (mu, nu, mubar) = counting(&a);
        let mubar2 = mubar.scaled(2.0).unwrap();
        let mut rng = SeededRng::new(1);
        let f: Vec<f64> = (0..64).map(|_| rng.unit()).collect();
        let total: f64 = f.iter().sum();
        let r = check_fubini(&mu, &nu, &mubar2, &f, 3).unwrap();
        assert!((r - total).abs() < 1e-12);
    }

    #[test]
    fn solve_orbit_measure_scales_and_rejects_degenerate() {
        let a = torus(8);
        let mu = GroupMeasureFamily::counting(a.clone(), 1.0).unwrap();
        let nu = StabilizerMeasureFamily::counting(a.clone(), 1.0).unwrap();
        assert_eq!(solve_orbit_measure(&mu, &nu, 0).unwrap(), vec![1.0; 8]);
        let row = solve_orbit_measure(&mu.scaled(3.0).unwrap(), &nu, 0).unwrap();
        assert_eq!(row, vec![3.0; 8]);
        let zero = StabilizerMeasureFamily::new(a.clone(), vec![vec![0.0; 8]; 8]).unwrap();
        assert!(matches!(solve_orbit_measure(&mu, &zero, 0), Err(Error::DegenerateMeasure { .. })));
    }

    #[test]
    fn orbit_stabilizer_mass() {
        let a = torus(4);
        let (_, _, mubar) = counting(&a);
        for b in 0..4 {
            let mass: f64 = mubar.row(b).iter().map(|w| w * a.stabilizer_of(b).len() as f64).sum();
            assert_eq!(mass, a.group().order() as f64);
        }
    }

    #[test]
    fn normalized_families_from_identity_indicator() {
        let a = z4();
        let psi = PsiFunction::identity_indicator(a.clone());
        let fam = construct_normalized_families(&psi).unwrap();
        assert!(fam.mu.rows().iter().flatten().all(|&w| w == 1.0));
        assert_eq!(fam.nu.rows(), vec![vec![1.0]; 4].as_slice());
        assert!(fam.mubar.rows().iter().flatten().all(|&w| w == 1.0));
        assert_eq!(fam.modular, 1.0);

        let t = torus(8);
        let fam = construct_normalized_families(&PsiFunction::identity_indicator(t.clone())).unwrap();
        assert!(fam.mubar.rows().iter().flatten().all(|&w| (w - 1.0).abs() < 1e-15));
        assert!(validate_families(&fam.mu, &fam.nu, &fam.mubar, 0.0).unwrap().is_ok());
    }

    #[test]
    fn psi_scaling_is_absorbed() {
        let t = torus(4);
        let psi = PsiFunction::identity_indicator(t.clone());
        let base = construct_normalized_families(&psi).unwrap();
        let scaled = construct_normalized_families(&psi.scaled(4.0).unwrap()).unwrap();
        assert!((scaled.mu.weight(0, 0) - base.mu.weight(0, 0) / 4.0).abs() < 1e-15);
        assert_eq!(scaled.mubar.rows(), base.mubar.rows());
    }

    #[test]
    fn non_invariant_psi_is_rejected() {
        let n = 3;
        let a = Arc::new(
            GroupAction::from_fn(FiniteGroup::dihedral(n), n, |x, v| {
                let (k, j) = (x % n, x / n);
                (k + if j == 0 { v } else { n - v }) % n
            })
            .unwrap(),
        );
        let mut psi0 = vec![0.0; 6];
        psi0[0] = 1.0;
        psi0[1] = 1.0; // r alone is not a conjugacy class in D_3
        let psi = PsiFunction::from_class_function(a, &psi0).unwrap();
        assert!(!psi.validate(1e-12).is_ok());
        assert!(construct_normalized_families(&psi).is_err());
    }

    #[test]
    fn delta_from_psi() {
        let t = torus(4);
        let psi = PsiFunction::identity_indicator(t.clone());
        let fam = construct_normalized_families(&psi).unwrap();
        let delta = restrict_psi_to_delta(&psi, &fam.nu, 1e-12).unwrap();
        for b in 0..4 {
            assert_eq!(delta.value(0, b), Some(1.0));
            assert_eq!(delta.value(1 + 4 * 3, b), Some(0.0));
        }
        assert!(delta.validate_conjugation(0.0).is_ok());
        assert!(delta.validate_normalization(&fam.nu, 1e-15).is_ok());

        // Uniform psi on G_b with a uniform nu_b.
        let uniform = PsiFunction::new(t.clone(), vec![vec![1.0; 4]; 16]).unwrap();
        let nu = StabilizerMeasureFamily::counting(t.clone(), 0.25 / 4.0 * 4.0).unwrap();
        let d = restrict_psi_to_delta(&uniform, &nu, 1e-12).unwrap();
        assert!(d.row(0).iter().all(|&x| x == 1.0));
        assert!(restrict_psi_to_delta(&uniform, &StabilizerMeasureFamily::counting(t, 1.0).unwrap(), 1e-12).is_err());
    }
}

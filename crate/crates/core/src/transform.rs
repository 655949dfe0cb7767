//! Kernels, orbitwise integral transforms, and the passage between kernels
//! and filters.
//!
//! A kernel assigns `kappa(c, b): E_c -> F_b` to pairs with `c` in the orbit
//! of `b`, subject to `A_F(g, b) kappa(c, b) = kappa(g.c, g.b) A_E(g, c)`.
//! Its transform is `T(f)(b) = sum_c mubar_b(c) kappa(c, b) f(c)`.
//!
//! Projection averages a filter over stabilizers,
//! `kappa(k.b, b) = sum_{h in G_b} nu_b(h) omega(k h, b) A_E(h^-1 k^-1, k.b)`.
//! The lift goes back using a choice of elements `theta(c, b)` carrying `b`
//! to `c` and a normalized stabilizer weight `delta`:
//! `omega(h, b) = delta(theta(h.b, b)^-1 h, b) kappa(h.b, b) A_E(h, b)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bundle::{act_on_section, ensure_section_bundle, section_to_mackey, EquivariantBundle, Section};
use crate::error::{Error, Result};
use crate::group::GroupAction;
use crate::linalg::{max_abs_diff, Matrix};
use crate::measures::{fubini_defect, GroupMeasureFamily, OrbitMeasureFamily, StabilizerMeasureFamily};
use crate::report::{witness, ValidationReport};
use crate::rng::SeededRng;
use crate::xcorr::{evaluate_at_identity, Filter};

/// A sparse table `(c, b) -> kappa(c, b)`, stored by `b`; zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    rows: Vec<BTreeMap<usize, Matrix>>,
}

impl Kernel {
    pub fn new(
        domain: Arc<EquivariantBundle>,
        codomain: Arc<EquivariantBundle>,
        entries: Vec<(usize, usize, Matrix)>,
    ) -> Result<Self> {
        if !domain.same_shape(&codomain) {
            return Err(Error::Structural("input and output bundles live over different actions".into()));
        }
        let action = domain.action();
        let nb = action.base_size();
        let mut rows = vec![BTreeMap::new(); nb];
        for (c, b, m) in entries {
            if b >= nb || c >= nb {
                return Err(Error::Structural(format!("kernel entry (c={c}, b={b}) out of range")));
            }
            if !action.in_orbit(b, c) {
                return Err(Error::Structural(format!("kernel entry (c={c}, b={b}) pairs points of different orbits")));
            }
            let shape = (codomain.fiber_dim(b), domain.fiber_dim(c));
            if m.shape() != shape {
                return Err(Error::Structural(format!(
                    "kernel entry (c={c}, b={b}) has shape {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
            if rows[b].contains_key(&c) {
                return Err(Error::Structural(format!("duplicate kernel entry (c={c}, b={b})")));
            }
            if !m.is_zero() {
                rows[b].insert(c, m);
            }
        }
        Ok(Kernel { domain, codomain, rows })
    }

    pub fn zeros(domain: Arc<EquivariantBundle>, codomain: Arc<EquivariantBundle>) -> Result<Self> {
        Kernel::new(domain, codomain, Vec::new())
    }

    /// Entries over all pairs `c in G.b` for which `f` returns a matrix.
    pub fn from_fn(
        domain: Arc<EquivariantBundle>,
        codomain: Arc<EquivariantBundle>,
        mut f: impl FnMut(usize, usize) -> Option<Matrix>,
    ) -> Result<Self> {
        let action = domain.action().clone();
        let mut entries = Vec::new();
        for b in 0..action.base_size() {
            for &c in action.orbit_members(b) {
                if let Some(m) = f(c, b) {
                    entries.push((c, b, m));
                }
            }
        }
        Kernel::new(domain, codomain, entries)
    }

    /// `kappa(b, b) = I`, zero off the diagonal.
    pub fn diagonal_identity(bundle: Arc<EquivariantBundle>) -> Self {
        let b2 = bundle.clone();
        Kernel::from_fn(bundle, b2.clone(), |c, b| (c == b).then(|| Matrix::identity(b2.fiber_dim(b))))
            .expect("diagonal kernel is well-formed")
    }

    pub fn domain(&self) -> &Arc<EquivariantBundle> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<EquivariantBundle> {
        &self.codomain
    }

    pub fn get(&self, c: usize, b: usize) -> Option<&Matrix> {
        self.rows[b].get(&c)
    }

    pub fn row(&self, b: usize) -> &BTreeMap<usize, Matrix> {
        &self.rows[b]
    }

    /// Support pairs `(c, b)` ordered by `b`, then `c`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.rows.iter().enumerate().flat_map(|(b, row)| row.keys().map(move |&c| (c, b))).collect()
    }

    pub fn support_len(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn entries(&self) -> Vec<(usize, usize, Matrix)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(b, row)| row.iter().map(move |(&c, m)| (c, b, m.clone())))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Kernel {
        let entries = self.entries().into_iter().map(|(c, b, m)| (c, b, m.scale(factor))).collect();
        Kernel::new(self.domain.clone(), self.codomain.clone(), entries).expect("scaling keeps shapes")
    }

    /// Replaces or inserts one entry.
    pub fn with_entry(&self, c: usize, b: usize, m: Matrix) -> Result<Kernel> {
        let mut entries: Vec<_> = self.entries().into_iter().filter(|e| (e.0, e.1) != (c, b)).collect();
        entries.push((c, b, m));
        Kernel::new(self.domain.clone(), self.codomain.clone(), entries)
    }

    /// Largest entrywise difference, treating missing entries as zero.
    pub fn max_abs_diff(&self, other: &Kernel) -> f64 {
        let mut worst: f64 = 0.0;
        for b in 0..self.rows.len() {
            for (c, m) in &self.rows[b] {
                worst = worst.max(match other.get(*c, b) {
                    Some(o) => m.max_abs_diff(o),
                    None => m.max_abs(),
                });
            }
            for (c, o) in &other.rows[b] {
                if !self.rows[b].contains_key(c) {
                    worst = worst.max(o.max_abs());
                }
            }
        }
        worst
    }
}

/// Scans `A_F(g, b) kappa(c, b) = kappa(g.c, g.b) A_E(g, c)` over all `g, b, c in G.b`.
pub fn validate_kernel(kappa: &Kernel, tolerance: f64) -> ValidationReport {
    let action = kappa.domain.action();
    let mut report = ValidationReport::new("kernel_constraint", tolerance);
    for g in 0..action.group().order() {
        for b in 0..action.base_size() {
            let gb = action.act(g, b);
            for &c in action.orbit_members(b) {
                let gc = action.act(g, c);
                let dev = match (kappa.get(c, b), kappa.get(gc, gb)) {
                    (None, None) => continue,
                    (Some(k), None) => kappa.codomain.matrix(g, b).mul(k).max_abs(),
                    (None, Some(k)) => k.mul(kappa.domain.matrix(g, c)).max_abs(),
                    (Some(k), Some(kg)) => {
                        kappa.codomain.matrix(g, b).mul(k).max_abs_diff(&kg.mul(kappa.domain.matrix(g, c)))
                    }
                };
                report.record(dev, || witness(&[("g", g), ("b", b), ("c", c)]));
            }
        }
    }
    report
}

/// Pairs of the support whose diagonal translate leaves the support.
pub fn validate_kernel_support(kappa: &Kernel) -> ValidationReport {
    let action = kappa.domain.action();
    let mut report = ValidationReport::new("kernel_support_invariance", 0.0);
    for (c, b) in kappa.support() {
        for g in 0..action.group().order() {
            let missing = kappa.get(action.act(g, c), action.act(g, b)).is_none();
            report.record(if missing { 1.0 } else { 0.0 }, || witness(&[("g", g), ("b", b), ("c", c)]));
        }
    }
    report
}

/// `T(f)(b) = sum_{c in G.b} mubar_b(c) kappa(c, b) f(c)`, ascending in `c`.
pub fn integral_transform(kappa: &Kernel, mubar: &OrbitMeasureFamily, f: &Section) -> Result<Section> {
    ensure_section_bundle(&kappa.domain, f.bundle())?;
    if **mubar.action() != **kappa.domain.action() {
        return Err(Error::Structural("orbit measure lives over a different action".into()));
    }
    let codomain = &kappa.codomain;
    let nb = codomain.action().base_size();
    let values: Vec<Vec<f64>> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut out = vec![0.0; codomain.fiber_dim(b)];
            for (&c, k) in &kappa.rows[b] {
                let w = mubar.weight(b, c).expect("kernel entries stay inside the orbit");
                k.mul_vec_acc(f.value(c), w, &mut out);
            }
            out
        })
        .collect();
    Ok(Section::from_flat(codomain.clone(), values.concat()))
}

/// Largest `|T(g.f) - g.T(f)|` over `samples` random sections and every `g`.
pub fn check_equivariance(
    kappa: &Kernel,
    mubar: &OrbitMeasureFamily,
    rng: &mut SeededRng,
    samples: usize,
) -> Result<ValidationReport> {
    let mut report = ValidationReport::new("transform_equivariance", 1e-12);
    let group = kappa.domain.action().group();
    for s in 0..samples {
        let f = Section::random(kappa.domain.clone(), rng);
        let tf = integral_transform(kappa, mubar, &f)?;
        for g in 0..group.order() {
            let lhs = integral_transform(kappa, mubar, &act_on_section(g, &f))?;
            let rhs = act_on_section(g, &tf);
            let (dev, b) = lhs.worst_point(&rhs);
            report.record(dev, || witness(&[("sample", s), ("g", g), ("b", b)]));
        }
    }
    Ok(report)
}

/// Averages a filter over stabilizers. Every stored `omega(x, b)` contributes
/// `nu_b(k^-1 x) omega(x, b) A_E(x^-1, x.b)` to `kappa(x.b, b)`, which is the
/// defining sum reindexed by `x = k h`.
pub fn project_filter_to_kernel(omega: &Filter, nu: &StabilizerMeasureFamily) -> Result<Kernel> {
    let domain = omega.domain();
    let action = domain.action();
    if **nu.action() != **action {
        return Err(Error::Structural("stabilizer measure lives over a different action".into()));
    }
    let group = action.group();
    let nb = action.base_size();
    let rows: Vec<Vec<(usize, usize, Matrix)>> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut acc: BTreeMap<usize, Matrix> = BTreeMap::new();
            for (&x, w) in omega.row(b) {
                let c = action.act(x, b);
                let k = action.rep(b, c).expect("x.b lies in the orbit of b");
                let h = group.mul(group.inv(k), x);
                let weight = nu.weight(b, h).expect("k^-1 x fixes b");
                if weight == 0.0 {
                    continue;
                }
                let term = w.mul(domain.matrix(group.inv(x), c));
                acc.entry(c)
                    .or_insert_with(|| Matrix::zeros(term.rows(), term.cols()))
                    .add_assign_scaled(&term, weight);
            }
            acc.into_iter().map(|(c, m)| (c, b, m)).collect()
        })
        .collect();
    Kernel::new(domain.clone(), omega.codomain().clone(), rows.concat())
}

/// Chosen elements `theta(c, b)` with `theta(c, b).b = c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaMap {
    action: Arc<GroupAction>,
    entries: BTreeMap<(usize, usize), usize>,
}

impl ThetaMap {
    /// Entries are `(c, b, element)`.
    pub fn new(action: Arc<GroupAction>, entries: Vec<(usize, usize, usize)>) -> Result<Self> {
        let (ng, nb) = (action.group().order(), action.base_size());
        let mut map = BTreeMap::new();
        for (c, b, g) in entries {
            if c >= nb || b >= nb || g >= ng {
                return Err(Error::Structural(format!("theta entry (c={c}, b={b}) -> {g} out of range")));
            }
            if map.insert((c, b), g).is_some() {
                return Err(Error::Structural(format!("duplicate theta entry (c={c}, b={b})")));
            }
        }
        Ok(ThetaMap { action, entries: map })
    }

    /// Evaluates `f` on every support pair of `kappa`.
    pub fn for_kernel(kappa: &Kernel, mut f: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let entries = kappa.support().into_iter().map(|(c, b)| (c, b, f(c, b))).collect();
        ThetaMap::new(kappa.domain().action().clone(), entries)
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    pub fn get(&self, c: usize, b: usize) -> Option<usize> {
        self.entries.get(&(c, b)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.entries.iter().map(|(&(c, b), &g)| (c, b, g))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_entry(&self, c: usize, b: usize, g: usize) -> ThetaMap {
        let mut out = self.clone();
        out.entries.insert((c, b), g);
        out
    }
}

#[derive(Clone, Debug)]
pub struct ThetaValidation {
    /// `theta(c, b).b = c`; each failing pair counts 1.
    pub lift: ValidationReport,
    /// `g theta(c, b) = theta(g.c, g.b) g`; each failing triple counts 1.
    pub equivariance: ValidationReport,
}

impl ThetaValidation {
    pub fn is_ok(&self) -> bool {
        self.lift.is_ok() && self.equivariance.is_ok()
    }
}

pub fn validate_theta(theta: &ThetaMap, kappa: &Kernel) -> Result<ThetaValidation> {
    let action = &theta.action;
    let group = action.group();
    let support = kappa.support();
    if let Some(&(c, b)) = support.iter().find(|&&(c, b)| theta.get(c, b).is_none()) {
        return Err(Error::Coverage { c, b });
    }
    let mut lift = ValidationReport::new("theta_lift", 0.0);
    let mut equivariance = ValidationReport::new("theta_equivariance", 0.0);
    for &(c, b) in &support {
        let t = theta.get(c, b).expect("coverage checked");
        let bad = action.act(t, b) != c;
        lift.record(if bad { 1.0 } else { 0.0 }, || witness(&[("c", c), ("b", b)]));
        for g in 0..group.order() {
            let moved = theta.get(action.act(g, c), action.act(g, b));
            let bad = moved.is_none_or(|m| group.mul(g, t) != group.mul(m, g));
            equivariance.record(if bad { 1.0 } else { 0.0 }, || witness(&[("g", g), ("c", c), ("b", b)]));
        }
    }
    Ok(ThetaValidation { lift, equivariance })
}

/// The matrices `A_E(theta(c, b), b): E_b -> E_c` identifying each fiber of
/// the receptive set of `b` with `E_b`.
pub fn theta_trivialization(theta: &ThetaMap, bundle: &EquivariantBundle) -> Vec<((usize, usize), Matrix)> {
    theta.entries().map(|(c, b, t)| ((c, b), bundle.matrix(t, b).clone())).collect()
}

/// Nonnegative weights on each stabilizer, parallel to the ascending stabilizer list.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaFunction {
    action: Arc<GroupAction>,
    values: Vec<Vec<f64>>,
}

impl DeltaFunction {
    pub fn new(action: Arc<GroupAction>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != action.base_size() {
            return Err(Error::Structural(format!("delta has {} rows for {} base points", rows.len(), action.base_size())));
        }
        for (b, r) in rows.iter().enumerate() {
            if r.len() != action.stabilizer_of(b).len() {
                return Err(Error::Structural(format!("delta row {b} does not match the stabilizer size")));
            }
            if let Some(x) = r.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::Domain(format!("delta values must be finite and nonnegative, got {x}")));
            }
        }
        Ok(DeltaFunction { action, values: rows })
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.values[b]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `delta(h, b)`, or `None` when `h` does not fix `b`.
    pub fn value(&self, h: usize, b: usize) -> Option<f64> {
        let stab = self.action.stabilizer_of(b);
        stab.binary_search(&h).ok().map(|i| self.values[b][i])
    }

    /// `sum_{h in G_b} delta(h, b) nu_b(h) = 1`.
    pub fn validate_normalization(&self, nu: &StabilizerMeasureFamily, tolerance: f64) -> ValidationReport {
        let mut report = ValidationReport::new("delta_normalization", tolerance);
        for b in 0..self.values.len() {
            let total: f64 = self.values[b].iter().zip(nu.row(b)).map(|(d, w)| d * w).sum();
            report.record(total - 1.0, || witness(&[("b", b)]));
        }
        report
    }

    /// `delta(g h g^-1, g.b) = delta(h, b)`.
    pub fn validate_conjugation(&self, tolerance: f64) -> ValidationReport {
        let action = &self.action;
        let group = action.group();
        let mut report = ValidationReport::new("delta_conjugation", tolerance);
        for g in 0..group.order() {
            for b in 0..action.base_size() {
                let gb = action.act(g, b);
                for (&h, &d) in action.stabilizer_of(b).iter().zip(&self.values[b]) {
                    let moved = self.value(group.conj(g, h), gb).unwrap_or(f64::INFINITY);
                    report.record(moved - d, || witness(&[("g", g), ("h", h), ("b", b)]));
                }
            }
        }
        report
    }
}

/// `delta(h, b) = [h = e] / nu_b(e)`.
pub fn dirac_delta(nu: &StabilizerMeasureFamily) -> Result<DeltaFunction> {
    let action = nu.action();
    let e = action.group().identity();
    let mut rows = Vec::with_capacity(action.base_size());
    for b in 0..action.base_size() {
        let at_e = nu.weight(b, e).expect("the identity fixes every point");
        if at_e <= 0.0 {
            return Err(Error::DegenerateMeasure { b, reason: "stabilizer measure has no mass at the identity".into() });
        }
        rows.push(action.stabilizer_of(b).iter().map(|&h| if h == e { 1.0 / at_e } else { 0.0 }).collect());
    }
    DeltaFunction::new(action.clone(), rows)
}

/// Builds the filter `omega(h, b) = delta(theta(h.b, b)^-1 h, b) kappa(h.b, b) A_E(h, b)`.
pub fn lift_kernel_to_filter(kappa: &Kernel, theta: &ThetaMap, delta: &DeltaFunction) -> Result<Filter> {
    let domain = kappa.domain();
    let action = domain.action();
    if **theta.action() != **action || **delta.action() != **action {
        return Err(Error::Structural("theta or delta lives over a different action".into()));
    }
    let group = action.group();
    let nb = action.base_size();
    let rows: Vec<Result<Vec<(usize, Matrix)>>> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut row = Vec::new();
            for h in 0..group.order() {
                let c = action.act(h, b);
                let Some(k) = kappa.get(c, b) else { continue };
                let t = theta.get(c, b).ok_or(Error::Coverage { c, b })?;
                let s = group.mul(group.inv(t), h);
                let d = delta.value(s, b).ok_or_else(|| {
                    Error::InvariantBreach(format!("theta({c}, {b})^-1 {h} does not fix {b}; theta is invalid"))
                })?;
                if d != 0.0 {
                    row.push((h, k.mul(domain.matrix(h, b)).scale(d)));
                }
            }
            Ok(row)
        })
        .collect();
    Filter::new(domain.clone(), kappa.codomain().clone(), rows.into_iter().collect::<Result<_>>()?)
}

/// `max_b |(lift(kappa) * f~)(e, b) - T(f)(b)|`, after confirming the
/// decomposition identity for the measure families.
#[allow(clippy::too_many_arguments)]
pub fn lift_equivalence_check(
    kappa: &Kernel,
    theta: &ThetaMap,
    delta: &DeltaFunction,
    mu: &GroupMeasureFamily,
    nu: &StabilizerMeasureFamily,
    mubar: &OrbitMeasureFamily,
    f: &Section,
    tolerance: f64,
) -> Result<f64> {
    let fubini = fubini_defect(mu, nu, mubar, tolerance);
    if !fubini.is_ok() {
        return Err(Error::Precondition(format!("measure families fail the decomposition identity: {fubini}")));
    }
    let omega = lift_kernel_to_filter(kappa, theta, delta)?;
    let lhs = evaluate_at_identity(&omega, &section_to_mackey(f), mu)?;
    let rhs = integral_transform(kappa, mubar, f)?;
    Ok(max_abs_diff(lhs.as_flat(), rhs.as_flat()))
}

/// Averages raw entries `raw(c, b)` over the stabilizer of each orbit
/// representative `b` and transports them along the orbit. Any input gives
/// a valid kernel.
pub fn reynolds_kernel(
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    mut raw: impl FnMut(usize, usize) -> Option<Matrix>,
) -> Result<Kernel> {
    if !domain.same_shape(&codomain) {
        return Err(Error::Structural("input and output bundles live over different actions".into()));
    }
    let action = domain.action().clone();
    let group = action.group();
    let mut entries = Vec::new();
    for b in action.fundamental_domain() {
        let orbit = action.orbit_members(b);
        let table: BTreeMap<usize, Matrix> = orbit.iter().filter_map(|&c| raw(c, b).map(|m| (c, m))).collect();
        let stab = action.stabilizer_of(b);
        let scale = 1.0 / stab.len() as f64;
        let mut averaged = BTreeMap::new();
        for &c in orbit {
            let shape = (codomain.fiber_dim(b), domain.fiber_dim(c));
            let mut acc = Matrix::zeros(shape.0, shape.1);
            let mut touched = false;
            for &s in stab {
                if let Some(r) = table.get(&action.act(s, c)) {
                    if r.shape() != shape {
                        return Err(Error::Structural(format!("raw kernel entry at c={c} has the wrong shape")));
                    }
                    acc.add_assign_scaled(&codomain.matrix(group.inv(s), b).mul(r).mul(domain.matrix(s, c)), scale);
                    touched = true;
                }
            }
            if touched && !acc.is_zero() {
                averaged.insert(c, acc);
            }
        }
        for &target in orbit {
            let k = action.rep(b, target).expect("orbit member has a representative");
            let forward = codomain.matrix(k, b);
            for (&c, m) in &averaged {
                let kc = action.act(k, c);
                entries.push((kc, target, forward.mul(m).mul(domain.matrix(group.inv(k), kc))));
            }
        }
    }
    Kernel::new(domain, codomain, entries)
}

/// A valid kernel with random entries wherever `support(c, b)` holds at an
/// orbit representative `b`.
pub fn random_valid_kernel(
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    rng: &mut SeededRng,
    support: impl Fn(usize, usize) -> bool,
) -> Result<Kernel> {
    let out_dims = codomain.fiber_dims().to_vec();
    let in_dims = domain.fiber_dims().to_vec();
    reynolds_kernel(domain, codomain, |c, b| {
        support(c, b).then(|| Matrix::from_fn(out_dims[b], in_dims[c], |_, _| rng.signed()))
    })
}

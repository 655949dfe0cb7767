//! Filters and the cross-correlation of Mackey sections.
//!
//! A filter assigns to every `(h, b)` a matrix `omega(h, b): E_b -> F_b`,
//! subject to `omega(g h g^-1, g.b) A_E(g, b) = A_F(g, b) omega(h, b)`.
//! The cross-correlation is
//!
//! ```text
//! (omega * m)(h, b) = sum_k mu_b(k) omega(k, b) m(h k, b)
//! ```
//!
//! summed over the support of `omega(-, b)` in ascending element order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bundle::{act_on_mackey, ensure_section_bundle, EquivariantBundle, MackeySection, Section};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::GroupMeasureFamily;
use crate::report::{witness, ValidationReport};
use crate::rng::SeededRng;

const EXHAUSTIVE_FILTER_CELLS: usize = 4_000_000;
const SAMPLED_FILTER_CELLS: usize = 200_000;

/// A sparse table `(h, b) -> omega(h, b)`; all-zero matrices are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    rows: Vec<BTreeMap<usize, Matrix>>,
}

fn check_pair(domain: &EquivariantBundle, codomain: &EquivariantBundle) -> Result<()> {
    if domain.same_shape(codomain) {
        Ok(())
    } else {
        Err(Error::Structural("input and output bundles live over different actions".into()))
    }
}

impl Filter {
    /// `rows[b]` lists the stored `(h, omega(h, b))` pairs.
    pub fn new(
        domain: Arc<EquivariantBundle>,
        codomain: Arc<EquivariantBundle>,
        rows: Vec<Vec<(usize, Matrix)>>,
    ) -> Result<Self> {
        check_pair(&domain, &codomain)?;
        let action = domain.action();
        let (ng, nb) = (action.group().order(), action.base_size());
        if rows.len() != nb {
            return Err(Error::Structural(format!("filter has {} rows for {nb} base points", rows.len())));
        }
        let mut out = Vec::with_capacity(nb);
        for (b, row) in rows.into_iter().enumerate() {
            let shape = (codomain.fiber_dim(b), domain.fiber_dim(b));
            let mut map = BTreeMap::new();
            for (h, m) in row {
                if h >= ng {
                    return Err(Error::Structural(format!("filter entry h={h} out of range at b={b}")));
                }
                if m.shape() != shape {
                    return Err(Error::Structural(format!(
                        "filter entry (h={h}, b={b}) has shape {:?}, expected {shape:?}",
                        m.shape()
                    )));
                }
                if map.contains_key(&h) {
                    return Err(Error::Structural(format!("duplicate filter entry (h={h}, b={b})")));
                }
                if !m.is_zero() {
                    map.insert(h, m);
                }
            }
            out.push(map);
        }
        Ok(Filter { domain, codomain, rows: out })
    }

    pub fn zeros(domain: Arc<EquivariantBundle>, codomain: Arc<EquivariantBundle>) -> Result<Self> {
        let nb = domain.action().base_size();
        Filter::new(domain, codomain, vec![Vec::new(); nb])
    }

    pub fn from_fn(
        domain: Arc<EquivariantBundle>,
        codomain: Arc<EquivariantBundle>,
        mut f: impl FnMut(usize, usize) -> Option<Matrix>,
    ) -> Result<Self> {
        let action = domain.action().clone();
        let rows = (0..action.base_size())
            .map(|b| (0..action.group().order()).filter_map(|h| f(h, b).map(|m| (h, m))).collect())
            .collect();
        Filter::new(domain, codomain, rows)
    }

    /// `omega(h, b) = [h = e] I` on a bundle mapped to itself.
    pub fn dirac_identity(bundle: Arc<EquivariantBundle>) -> Self {
        let e = bundle.action().group().identity();
        let b2 = bundle.clone();
        Filter::from_fn(bundle, b2.clone(), |h, b| (h == e).then(|| Matrix::identity(b2.fiber_dim(b))))
            .expect("identity filter is well-formed")
    }

    pub fn domain(&self) -> &Arc<EquivariantBundle> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<EquivariantBundle> {
        &self.codomain
    }

    pub fn get(&self, h: usize, b: usize) -> Option<&Matrix> {
        self.rows[b].get(&h)
    }

    /// Stored entries of `omega(-, b)` in ascending `h`.
    pub fn row(&self, b: usize) -> &BTreeMap<usize, Matrix> {
        &self.rows[b]
    }

    pub fn support(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[b].keys().copied()
    }

    pub fn support_len(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    /// Dense copy of `omega(h, b)`, zero when unstored.
    pub fn matrix_or_zero(&self, h: usize, b: usize) -> Matrix {
        self.get(h, b)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(self.codomain.fiber_dim(b), self.domain.fiber_dim(b)))
    }

    pub fn scaled(&self, factor: f64) -> Filter {
        self.map(|_, _, m| m.scale(factor))
    }

    pub fn add_scaled(&self, other: &Filter, factor: f64) -> Result<Filter> {
        let nb = self.rows.len();
        let rows = (0..nb)
            .map(|b| {
                let mut row = self.rows[b].clone();
                for (h, m) in &other.rows[b] {
                    row.entry(*h)
                        .or_insert_with(|| Matrix::zeros(m.rows(), m.cols()))
                        .add_assign_scaled(m, factor);
                }
                row.into_iter().collect()
            })
            .collect();
        Filter::new(self.domain.clone(), self.codomain.clone(), rows)
    }

    /// Largest entrywise difference, unstored entries counting as zero.
    pub fn max_abs_diff(&self, other: &Filter) -> f64 {
        let mut worst: f64 = 0.0;
        for (mine, theirs) in self.rows.iter().zip(&other.rows) {
            for (h, m) in mine {
                worst = worst.max(theirs.get(h).map_or_else(|| m.max_abs(), |t| m.max_abs_diff(t)));
            }
            for (h, t) in theirs {
                if !mine.contains_key(h) {
                    worst = worst.max(t.max_abs());
                }
            }
        }
        worst
    }

    fn map(&self, mut f: impl FnMut(usize, usize, &Matrix) -> Matrix) -> Filter {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(b, row)| row.iter().map(|(&h, m)| (h, f(h, b, m))).filter(|(_, m)| !m.is_zero()).collect())
            .collect();
        Filter { domain: self.domain.clone(), codomain: self.codomain.clone(), rows }
    }

    /// Replaces or inserts a single entry.
    pub fn with_entry(&self, h: usize, b: usize, m: Matrix) -> Result<Filter> {
        let mut rows: Vec<Vec<(usize, Matrix)>> =
            self.rows.iter().map(|r| r.iter().map(|(&k, m)| (k, m.clone())).collect()).collect();
        rows[b].retain(|(k, _)| *k != h);
        rows[b].push((h, m));
        Filter::new(self.domain.clone(), self.codomain.clone(), rows)
    }
}

/// Scans `omega(g h g^-1, g.b) A_E(g, b) = A_F(g, b) omega(h, b)`.
pub fn validate_filter(omega: &Filter, tolerance: f64) -> ValidationReport {
    let action = omega.domain.action();
    let group = action.group();
    let (ng, nb) = (group.order(), action.base_size());
    let mut report = ValidationReport::new("filter_constraint", tolerance);
    let mut check = |g: usize, h: usize, b: usize| {
        let gb = action.act(g, b);
        let lhs = omega.get(group.conj(g, h), gb);
        let rhs = omega.get(h, b);
        let dev = match (lhs, rhs) {
            (None, None) => return,
            (Some(l), None) => l.mul(omega.domain.matrix(g, b)).max_abs(),
            (None, Some(r)) => omega.codomain.matrix(g, b).mul(r).max_abs(),
            (Some(l), Some(r)) => {
                l.mul(omega.domain.matrix(g, b)).max_abs_diff(&omega.codomain.matrix(g, b).mul(r))
            }
        };
        report.record(dev, || witness(&[("g", g), ("h", h), ("b", b)]));
    };
    if ng * ng * nb <= EXHAUSTIVE_FILTER_CELLS {
        for g in 0..ng {
            for b in 0..nb {
                for h in 0..ng {
                    check(g, h, b);
                }
            }
        }
    } else {
        let mut rng = SeededRng::derive(0, "filter_constraint");
        for _ in 0..SAMPLED_FILTER_CELLS {
            check(rng.index(ng), rng.index(ng), rng.index(nb));
        }
    }
    report
}

fn check_inputs(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily) -> Result<()> {
    ensure_section_bundle(&omega.domain, m.bundle())?;
    if **mu.action() != **omega.domain.action() {
        return Err(Error::Structural("measure family lives over a different action".into()));
    }
    Ok(())
}

fn correlate_into(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily, h: usize, b: usize, out: &mut [f64]) {
    let group = omega.domain.action().group();
    for (&k, w) in &omega.rows[b] {
        let weight = mu.weight(b, k);
        if weight != 0.0 {
            w.mul_vec_acc(m.value(group.mul(h, k), b), weight, out);
        }
    }
}

/// `(omega * m)(h, b)` at a single cell.
pub fn correlate_at(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily, h: usize, b: usize) -> Result<Vec<f64>> {
    check_inputs(omega, m, mu)?;
    let mut out = vec![0.0; omega.codomain.fiber_dim(b)];
    correlate_into(omega, m, mu, h, b, &mut out);
    Ok(out)
}

/// The full cross-correlation, as a Mackey section of the output bundle.
pub fn cross_correlate(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily) -> Result<MackeySection> {
    check_inputs(omega, m, mu)?;
    let codomain = &omega.codomain;
    let (ng, nb) = (codomain.action().group().order(), codomain.action().base_size());
    let row_len = codomain.total_dim();
    let mut data = vec![0.0; ng * row_len];
    if row_len > 0 {
        data.par_chunks_mut(row_len).enumerate().for_each(|(h, row)| {
            for b in 0..nb {
                let off = codomain.offset(b);
                correlate_into(omega, m, mu, h, b, &mut row[off..off + codomain.fiber_dim(b)]);
            }
        });
    }
    Ok(MackeySection::from_flat(codomain.clone(), data))
}

/// The section `b -> (omega * m)(e, b)`.
pub fn evaluate_at_identity(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily) -> Result<Section> {
    check_inputs(omega, m, mu)?;
    let codomain = &omega.codomain;
    let e = codomain.action().group().identity();
    let mut data = vec![0.0; codomain.total_dim()];
    for b in 0..codomain.action().base_size() {
        let off = codomain.offset(b);
        correlate_into(omega, m, mu, e, b, &mut data[off..off + codomain.fiber_dim(b)]);
    }
    Ok(Section::from_flat(codomain.clone(), data))
}

/// `omega'(h, b) = omega(h^-1, b)`.
pub fn to_convolution_form(omega: &Filter) -> Filter {
    let group = omega.domain.action().group();
    let rows = omega
        .rows
        .iter()
        .map(|row| row.iter().map(|(&h, m)| (group.inv(h), m.clone())).collect())
        .collect();
    Filter { domain: omega.domain.clone(), codomain: omega.codomain.clone(), rows }
}

/// `(omega' # m)(h, b) = sum_k mu_b(k) omega'(k^-1 h, b) m(k, b)`.
pub fn convolve(omega_conv: &Filter, m: &MackeySection, mu: &GroupMeasureFamily) -> Result<MackeySection> {
    check_inputs(omega_conv, m, mu)?;
    let codomain = &omega_conv.codomain;
    let group = codomain.action().group();
    let nb = codomain.action().base_size();
    let mut out = MackeySection::zeros(codomain.clone());
    for h in 0..group.order() {
        for b in 0..nb {
            let cell = out.value_mut(h, b);
            // k^-1 h = j  <=>  k = h j^-1
            for (&j, w) in &omega_conv.rows[b] {
                let k = group.mul(h, group.inv(j));
                w.mul_vec_acc(m.value(k, b), mu.weight(b, k), cell);
            }
        }
    }
    Ok(out)
}

/// Outcome of comparing the convolution form with the cross-correlation.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvolutionCheck {
    Residual(f64),
    /// The measure family is not left invariant, so no equality is claimed.
    Skipped,
}

pub fn check_convolution_form(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily) -> Result<ConvolutionCheck> {
    if !mu.is_left_invariant() {
        return Ok(ConvolutionCheck::Skipped);
    }
    let direct = cross_correlate(omega, m, mu)?;
    let conv = convolve(&to_convolution_form(omega), m, mu)?;
    Ok(ConvolutionCheck::Residual(direct.max_abs_diff(&conv)))
}

/// `max |omega * (g.m) - g.(omega * m)|` for one group element.
pub fn equivariance_residual(omega: &Filter, m: &MackeySection, mu: &GroupMeasureFamily, g: usize) -> Result<f64> {
    let moved = cross_correlate(omega, &act_on_mackey(g, m), mu)?;
    let expected = act_on_mackey(g, &cross_correlate(omega, m, mu)?);
    Ok(moved.max_abs_diff(&expected))
}

/// Rows of a filter at the orbit representatives of the fundamental domain.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedFilter {
    pub domain: Arc<EquivariantBundle>,
    pub codomain: Arc<EquivariantBundle>,
    pub rows: BTreeMap<usize, BTreeMap<usize, Matrix>>,
}

pub fn compress_filter(omega: &Filter) -> CompressedFilter {
    let rows = omega.domain.action().fundamental_domain().into_iter().map(|b| (b, omega.rows[b].clone())).collect();
    CompressedFilter { domain: omega.domain.clone(), codomain: omega.codomain.clone(), rows }
}

/// Rebuilds every row from the stored representatives via
/// `omega(k h k^-1, k.b) = A_F(k, b) omega(h, b) A_E(k^-1, k.b)`, after
/// checking that each stored row respects its stabilizer.
pub fn expand_filter(compressed: &CompressedFilter, tolerance: f64) -> Result<Filter> {
    let (domain, codomain) = (&compressed.domain, &compressed.codomain);
    check_pair(domain, codomain)?;
    let action = domain.action();
    let group = action.group();
    let fd = action.fundamental_domain();
    let stored: Vec<usize> = compressed.rows.keys().copied().collect();
    if stored != fd {
        return Err(Error::Structural(format!("compressed rows {stored:?} do not match the fundamental domain {fd:?}")));
    }
    for (&b, row) in &compressed.rows {
        let zero = Matrix::zeros(codomain.fiber_dim(b), domain.fiber_dim(b));
        for &s in action.stabilizer_of(b) {
            for h in 0..group.order() {
                let r = row.get(&h).unwrap_or(&zero);
                let l = row.get(&group.conj(s, h)).unwrap_or(&zero);
                if r.shape() != zero.shape() || l.shape() != zero.shape() {
                    return Err(Error::Structural(format!("filter entry at (h={h}, b={b}) has the wrong shape")));
                }
                let deviation = l.mul(domain.matrix(s, b)).max_abs_diff(&codomain.matrix(s, b).mul(r));
                if deviation > tolerance {
                    return Err(Error::Inconsistent { b, g: s, h, deviation });
                }
            }
        }
    }
    let mut rows: Vec<Vec<(usize, Matrix)>> = vec![Vec::new(); action.base_size()];
    for (&b, row) in &compressed.rows {
        for &c in action.orbit_members(b) {
            let k = action.rep(b, c).expect("orbit member has a representative");
            let back = domain.matrix(group.inv(k), c);
            let forward = codomain.matrix(k, b);
            for (&h, m) in row {
                rows[c].push((group.conj(k, h), forward.mul(m).mul(back)));
            }
        }
    }
    Filter::new(domain.clone(), codomain.clone(), rows)
}

/// Averages raw rows over each stabilizer and transports them along the
/// orbit, which yields a table satisfying the constraint for any input.
/// `raw(h, b)` is only consulted at orbit representatives.
pub fn reynolds_filter(
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    mut raw: impl FnMut(usize, usize) -> Option<Matrix>,
) -> Result<Filter> {
    check_pair(&domain, &codomain)?;
    let action = domain.action().clone();
    let group = action.group();
    let mut rows = BTreeMap::new();
    for b in action.fundamental_domain() {
        let shape = (codomain.fiber_dim(b), domain.fiber_dim(b));
        let table: Vec<Option<Matrix>> = (0..group.order()).map(|h| raw(h, b)).collect();
        if let Some(m) = table.iter().flatten().find(|m| m.shape() != shape) {
            return Err(Error::Structural(format!("raw filter entry has shape {:?}, expected {shape:?}", m.shape())));
        }
        let stab = action.stabilizer_of(b);
        let scale = 1.0 / stab.len() as f64;
        let mut row = BTreeMap::new();
        for h in 0..group.order() {
            let mut acc = Matrix::zeros(shape.0, shape.1);
            let mut touched = false;
            for &s in stab {
                if let Some(r) = &table[group.conj(s, h)] {
                    let term = codomain.matrix(group.inv(s), b).mul(r).mul(domain.matrix(s, b));
                    acc.add_assign_scaled(&term, scale);
                    touched = true;
                }
            }
            if touched && !acc.is_zero() {
                row.insert(h, acc);
            }
        }
        rows.insert(b, row);
    }
    expand_filter(&CompressedFilter { domain, codomain, rows }, f64::INFINITY)
}

/// A dense valid filter with entries drawn uniformly from `[-1, 1)`.
pub fn random_valid_filter(
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    rng: &mut SeededRng,
) -> Result<Filter> {
    let dims_out: Vec<usize> = codomain.fiber_dims().to_vec();
    let dims_in: Vec<usize> = domain.fiber_dims().to_vec();
    reynolds_filter(domain, codomain, |_, b| {
        let (r, c) = (dims_out[b], dims_in[b]);
        Some(Matrix::from_fn(r, c, |_, _| rng.signed()))
    })
}

/// Unconstrained random table; generically violates the constraint.
pub fn random_filter_table(
    domain: Arc<EquivariantBundle>,
    codomain: Arc<EquivariantBundle>,
    rng: &mut SeededRng,
) -> Result<Filter> {
    let dims_out: Vec<usize> = codomain.fiber_dims().to_vec();
    let dims_in: Vec<usize> = domain.fiber_dims().to_vec();
    Filter::from_fn(domain, codomain, |_, b| Some(Matrix::from_fn(dims_out[b], dims_in[b], |_, _| rng.signed())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{section_to_mackey, validate_mackey};
    use crate::group::{FiniteGroup, GroupAction};

    fn z4_line() -> Arc<EquivariantBundle> {
        let a = Arc::new(GroupAction::regular(FiniteGroup::cyclic(4)));
        Arc::new(EquivariantBundle::trivial(a, 1))
    }

    fn d3_vertices() -> Arc<GroupAction> {
        let n = 3;
        Arc::new(
            GroupAction::from_fn(FiniteGroup::dihedral(n), n, |x, v| {
                let (k, j) = (x % n, x / n);
                (k + if j == 0 { v } else { n - v }) % n
            })
            .unwrap(),
        )
    }

    fn d3_sign() -> Arc<EquivariantBundle> {
        let a = d3_vertices();
        Arc::new(EquivariantBundle::from_representation(a, 1, |x| Matrix::scalar(if x < 3 { 1.0 } else { -1.0 })).unwrap())
    }

    fn d3_plane() -> Arc<EquivariantBundle> {
        let a = d3_vertices();
        Arc::new(
            EquivariantBundle::from_representation(a, 2, |x| {
                let (k, j) = (x % 3, x / 3);
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                let rot = Matrix::from_row_major(2, 2, vec![t.cos(), -t.sin(), t.sin(), t.cos()]).unwrap();
                if j == 0 {
                    rot
                } else {
                    rot.mul(&Matrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, -1.0]).unwrap())
                }
            })
            .unwrap(),
        )
    }

    fn mackey(bundle: &Arc<EquivariantBundle>, rng: &mut SeededRng) -> MackeySection {
        section_to_mackey(&Section::random(bundle.clone(), rng))
    }

    #[test]
    fn basic_valid_filters() {
        let e = z4_line();
        assert!(validate_filter(&Filter::dirac_identity(e.clone()), 0.0).is_ok());
        let c = Filter::from_fn(e.clone(), e.clone(), |_, _| Some(Matrix::scalar(2.5))).unwrap();
        assert!(validate_filter(&c, 0.0).is_ok());
        let zero = Filter::from_fn(e.clone(), e.clone(), |_, _| Some(Matrix::scalar(0.0))).unwrap();
        assert_eq!(zero.support_len(), 0);
    }

    #[test]
    fn random_table_on_d3_is_flagged() {
        let e = d3_sign();
        let mut rng = SeededRng::new(3);
        let w = random_filter_table(e.clone(), e, &mut rng).unwrap();
        let report = validate_filter(&w, 1e-9);
        assert!(report.max_violation > 1e-3);
        assert!(report.worst().unwrap().witness.contains_key("g"));
    }

    #[test]
    fn shape_errors() {
        let e = z4_line();
        let bad = Filter::new(e.clone(), e.clone(), vec![vec![(0, Matrix::zeros(2, 1))], vec![], vec![], vec![]]);
        assert!(matches!(bad, Err(Error::Structural(_))));
        let out_of_range = Filter::new(e.clone(), e.clone(), vec![vec![(9, Matrix::scalar(1.0))], vec![], vec![], vec![]]);
        assert!(out_of_range.is_err());
    }

    #[test]
    fn dirac_identity_returns_input() {
        let e = d3_plane();
        let mut rng = SeededRng::new(5);
        let m = mackey(&e, &mut rng);
        let a = e.action().clone();
        let mu = GroupMeasureFamily::counting(a, 1.0).unwrap();
        let out = cross_correlate(&Filter::dirac_identity(e), &m, &mu).unwrap();
        assert_eq!(out.max_abs_diff(&m), 0.0);
    }

    #[test]
    fn constant_filter_on_z4_sums_an_indicator() {
        let e = z4_line();
        let a = e.action().clone();
        let f = Section::new(e.clone(), vec![vec![1.0], vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        let ones = Filter::from_fn(e.clone(), e.clone(), |_, _| Some(Matrix::scalar(1.0))).unwrap();
        let mu = GroupMeasureFamily::counting(a, 1.0).unwrap();
        let out = cross_correlate(&ones, &section_to_mackey(&f), &mu).unwrap();
        assert!(out.as_flat().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn dirac_at_one_shifts_and_converts() {
        let e = z4_line();
        let a = e.action().clone();
        let mu = GroupMeasureFamily::counting(a, 1.0).unwrap();
        let w = Filter::from_fn(e.clone(), e.clone(), |h, _| (h == 1).then(|| Matrix::scalar(1.0))).unwrap();
        let conv = to_convolution_form(&w);
        assert_eq!(conv.support(0).collect::<Vec<_>>(), vec![3]);
        // For f~(h, b) = f(h + b) the filter reads f one step ahead.
        let f = Section::from_fn(e.clone(), |b, _| (b * b) as f64);
        let out = cross_correlate(&w, &section_to_mackey(&f), &mu).unwrap();
        assert_eq!(out.value(0, 2), &[9.0]);
        let mut rng = SeededRng::new(8);
        for _ in 0..5 {
            let m = MackeySection::random_table(e.clone(), &mut rng);
            assert_eq!(check_convolution_form(&w, &m, &mu).unwrap(), ConvolutionCheck::Residual(0.0));
        }
        let diri = Filter::dirac_identity(e);
        assert_eq!(to_convolution_form(&diri), diri);
    }

    #[test]
    fn convolution_form_on_d3_and_skip_flag() {
        let e = d3_plane();
        let a = e.action().clone();
        let mut rng = SeededRng::new(21);
        let w = random_valid_filter(e.clone(), e.clone(), &mut rng).unwrap();
        let mu = GroupMeasureFamily::counting(a.clone(), 1.0).unwrap();
        for _ in 0..10 {
            let m = mackey(&e, &mut rng);
            match check_convolution_form(&w, &m, &mu).unwrap() {
                ConvolutionCheck::Residual(r) => assert!(r <= 1e-12),
                ConvolutionCheck::Skipped => panic!("counting measure is left invariant"),
            }
        }
        let mut rows = mu.rows();
        rows[0][1] = 2.0;
        let uneven = GroupMeasureFamily::new(a, rows).unwrap();
        let m = mackey(&e, &mut rng);
        assert_eq!(check_convolution_form(&w, &m, &uneven).unwrap(), ConvolutionCheck::Skipped);
    }

    #[test]
    fn reynolds_filters_are_valid_and_equivariant() {
        let e = d3_plane();
        let f = d3_sign();
        let a = e.action().clone();
        let mu = GroupMeasureFamily::counting(a.clone(), 0.5).unwrap();
        let mut rng = SeededRng::new(2);
        let w = random_valid_filter(e.clone(), f.clone(), &mut rng).unwrap();
        assert!(validate_filter(&w, 1e-12).is_ok());
        let m = mackey(&e, &mut rng);
        let out = cross_correlate(&w, &m, &mu).unwrap();
        assert!(validate_mackey(&out, 1e-12).is_ok());
        for g in 0..a.group().order() {
            assert!(equivariance_residual(&w, &m, &mu, g).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn codec_round_trip_and_inconsistency() {
        let e = d3_plane();
        let mut rng = SeededRng::new(4);
        let w = random_valid_filter(e.clone(), e.clone(), &mut rng).unwrap();
        let c = compress_filter(&w);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(expand_filter(&c, 1e-9).unwrap(), w);

        let mut broken = c.clone();
        let row = broken.rows.get_mut(&0).unwrap();
        row.insert(1, Matrix::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        match expand_filter(&broken, 1e-9) {
            Err(Error::Inconsistent { b, deviation, .. }) => {
                assert_eq!(b, 0);
                assert!(deviation > 1e-9);
            }
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn abelian_transitive_rows_coincide() {
        let e = z4_line();
        let mut rng = SeededRng::new(6);
        let w = random_valid_filter(e.clone(), e, &mut rng).unwrap();
        for b in 1..4 {
            assert_eq!(w.row(b), w.row(0));
        }
    }

    #[test]
    fn zero_dimensional_fibers() {
        let a = Arc::new(GroupAction::regular(FiniteGroup::cyclic(3)));
        let e = Arc::new(EquivariantBundle::trivial(a.clone(), 0));
        let mu = GroupMeasureFamily::counting(a, 1.0).unwrap();
        let w = Filter::zeros(e.clone(), e.clone()).unwrap();
        let out = cross_correlate(&w, &MackeySection::zeros(e.clone()), &mu).unwrap();
        assert!(out.value(1, 1).is_empty());
    }

    #[test]
    fn linear_in_section_and_filter() {
        let e = d3_plane();
        let a = e.action().clone();
        let mu = GroupMeasureFamily::counting(a, 1.0).unwrap();
        let mut rng = SeededRng::new(13);
        let w1 = random_valid_filter(e.clone(), e.clone(), &mut rng).unwrap();
        let w2 = random_valid_filter(e.clone(), e.clone(), &mut rng).unwrap();
        let m1 = mackey(&e, &mut rng);
        let m2 = mackey(&e, &mut rng);
        let lhs = cross_correlate(&w1, &m1.add_scaled(&m2, -2.0), &mu).unwrap();
        let rhs = cross_correlate(&w1, &m1, &mu).unwrap().add_scaled(&cross_correlate(&w1, &m2, &mu).unwrap(), -2.0);
        assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
        let sum = cross_correlate(&w1.add_scaled(&w2, 1.0).unwrap(), &m1, &mu).unwrap();
        let parts = cross_correlate(&w1, &m1, &mu).unwrap().add_scaled(&cross_correlate(&w2, &m1, &mu).unwrap(), 1.0);
        assert!(sum.max_abs_diff(&parts) <= 1e-12);
    }
}

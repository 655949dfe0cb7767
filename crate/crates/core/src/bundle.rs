//! Equivariant vector bundles over a finite base, their sections and Mackey
//! sections.
//!
//! A bundle assigns a fiber dimension to every base point and a matrix
//! `A(g, b): E_b -> E_{g.b}` to every pair, subject to the cocycle law
//! `A(gh, b) = A(g, h.b) A(h, b)`. Sections act by conjugation,
//! `(g.f)(b) = A(g, g^-1.b) f(g^-1.b)`, and the Mackey section of `f` is
//! `f~(h, b) = A(h^-1, h.b) f(h.b)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::GroupAction;
use crate::linalg::{max_abs_diff, Matrix};
use crate::report::{witness, ValidationReport};
use crate::rng::SeededRng;

const EXHAUSTIVE_COCYCLE_CELLS: usize = 1_000_000;
const SAMPLED_COCYCLE_CELLS: usize = 200_000;

#[derive(Clone, PartialEq)]
pub struct EquivariantBundle {
    action: Arc<GroupAction>,
    fiber_dims: Vec<usize>,
    offsets: Vec<usize>,
    total_dim: usize,
    matrices: Vec<Matrix>,
}

impl fmt::Debug for EquivariantBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EquivariantBundle").field("fiber_dims", &self.fiber_dims).finish()
    }
}

impl EquivariantBundle {
    /// `matrices[g * |B| + b]` must have shape `dim(g.b) x dim(b)`.
    pub fn new(action: Arc<GroupAction>, fiber_dims: Vec<usize>, matrices: Vec<Matrix>) -> Result<Self> {
        let (ng, nb) = (action.group().order(), action.base_size());
        if fiber_dims.len() != nb {
            return Err(Error::Structural(format!("{} fiber dimensions for {nb} base points", fiber_dims.len())));
        }
        if matrices.len() != ng * nb {
            return Err(Error::Structural(format!("{} action matrices, expected {}", matrices.len(), ng * nb)));
        }
        for g in 0..ng {
            for b in 0..nb {
                let expected = (fiber_dims[action.act(g, b)], fiber_dims[b]);
                let got = matrices[g * nb + b].shape();
                if got != expected {
                    return Err(Error::Structural(format!(
                        "action matrix at (g={g}, b={b}) has shape {got:?}, expected {expected:?}"
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(nb);
        let mut total_dim = 0;
        for &d in &fiber_dims {
            offsets.push(total_dim);
            total_dim += d;
        }
        Ok(EquivariantBundle { action, fiber_dims, offsets, total_dim, matrices })
    }

    pub fn from_fn(
        action: Arc<GroupAction>,
        fiber_dims: Vec<usize>,
        f: impl Fn(usize, usize) -> Matrix,
    ) -> Result<Self> {
        let (ng, nb) = (action.group().order(), action.base_size());
        let matrices = (0..ng * nb).map(|i| f(i / nb, i % nb)).collect();
        EquivariantBundle::new(action, fiber_dims, matrices)
    }

    /// Rank-`dim` bundle on which every group element acts by the identity.
    pub fn trivial(action: Arc<GroupAction>, dim: usize) -> Self {
        let nb = action.base_size();
        EquivariantBundle::from_fn(action, vec![dim; nb], |_, _| Matrix::identity(dim))
            .expect("trivial bundles are well-formed")
    }

    /// Bundle with `A(g, b) = rho(g)` for a representation `rho` of the group.
    pub fn from_representation(action: Arc<GroupAction>, dim: usize, rho: impl Fn(usize) -> Matrix) -> Result<Self> {
        let nb = action.base_size();
        let reps: Vec<Matrix> = (0..action.group().order()).map(rho).collect();
        EquivariantBundle::from_fn(action, vec![dim; nb], |g, _| reps[g].clone())
    }

    pub fn action(&self) -> &Arc<GroupAction> {
        &self.action
    }

    pub fn fiber_dim(&self, b: usize) -> usize {
        self.fiber_dims[b]
    }

    pub fn fiber_dims(&self) -> &[usize] {
        &self.fiber_dims
    }

    /// Sum of all fiber dimensions; the length of a flattened section.
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub(crate) fn offset(&self, b: usize) -> usize {
        self.offsets[b]
    }

    /// `A(g, b): E_b -> E_{g.b}`.
    #[inline]
    pub fn matrix(&self, g: usize, b: usize) -> &Matrix {
        &self.matrices[g * self.action.base_size() + b]
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    /// Same action (fiber dimensions and matrices may differ).
    pub fn same_shape(&self, other: &EquivariantBundle) -> bool {
        Arc::ptr_eq(&self.action, &other.action) || *self.action == *other.action
    }

    /// Reports cocycle violations and fiber dimensions that change along an orbit.
    pub fn validate(&self, tolerance: f64) -> ValidationReport {
        let action = &self.action;
        let group = action.group();
        let (ng, nb) = (group.order(), action.base_size());
        let mut report = ValidationReport::new("bundle_cocycle", tolerance);
        for b in 0..nb {
            let rep = action.orbit_representative(b);
            let diff = self.fiber_dims[b].abs_diff(self.fiber_dims[rep]);
            report.record(diff as f64, || witness(&[("fiber_dim_at", b), ("orbit_rep", rep)]));
            let id = Matrix::identity(self.fiber_dims[b]);
            let dev = self.matrix(group.identity(), b).max_abs_diff(&id);
            report.record(dev, || witness(&[("identity_at", b)]));
        }
        let mut check = |g: usize, h: usize, b: usize| {
            let composed = self.matrix(g, action.act(h, b)).mul(self.matrix(h, b));
            let dev = self.matrix(group.mul(g, h), b).max_abs_diff(&composed);
            report.record(dev, || witness(&[("g", g), ("h", h), ("b", b)]));
        };
        if ng * ng * nb <= EXHAUSTIVE_COCYCLE_CELLS {
            for g in 0..ng {
                for h in 0..ng {
                    for b in 0..nb {
                        check(g, h, b);
                    }
                }
            }
        } else {
            let mut rng = SeededRng::derive(0, "bundle_cocycle");
            for _ in 0..SAMPLED_COCYCLE_CELLS {
                check(rng.index(ng), rng.index(ng), rng.index(nb));
            }
        }
        report
    }
}

/// A tabulated section `b -> f(b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    bundle: Arc<EquivariantBundle>,
    data: Vec<f64>,
}

impl Section {
    pub fn new(bundle: Arc<EquivariantBundle>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != bundle.action().base_size() {
            return Err(Error::Structural(format!(
                "section has {} values for {} base points",
                values.len(),
                bundle.action().base_size()
            )));
        }
        for (b, v) in values.iter().enumerate() {
            if v.len() != bundle.fiber_dim(b) {
                return Err(Error::Structural(format!(
                    "value at base point {b} has length {}, fiber dimension is {}",
                    v.len(),
                    bundle.fiber_dim(b)
                )));
            }
        }
        Ok(Section { data: values.concat(), bundle })
    }

    pub fn zeros(bundle: Arc<EquivariantBundle>) -> Self {
        Section { data: vec![0.0; bundle.total_dim()], bundle }
    }

    pub fn from_fn(bundle: Arc<EquivariantBundle>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(bundle.total_dim());
        for b in 0..bundle.action().base_size() {
            for i in 0..bundle.fiber_dim(b) {
                data.push(f(b, i));
            }
        }
        Section { data, bundle }
    }

    /// Entries uniform in `[-1, 1)`.
    pub fn random(bundle: Arc<EquivariantBundle>, rng: &mut SeededRng) -> Self {
        let data = rng.vec(bundle.total_dim());
        Section { data, bundle }
    }

    pub fn bundle(&self) -> &Arc<EquivariantBundle> {
        &self.bundle
    }

    pub fn value(&self, b: usize) -> &[f64] {
        let off = self.bundle.offset(b);
        &self.data[off..off + self.bundle.fiber_dim(b)]
    }

    fn value_mut(&mut self, b: usize) -> &mut [f64] {
        let off = self.bundle.offset(b);
        let d = self.bundle.fiber_dim(b);
        &mut self.data[off..off + d]
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        (0..self.bundle.action().base_size()).map(|b| self.value(b).to_vec()).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn from_flat(bundle: Arc<EquivariantBundle>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), bundle.total_dim());
        Section { bundle, data }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &Section, factor: f64) -> Section {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + factor * b).collect();
        Section { bundle: self.bundle.clone(), data }
    }

    pub fn max_abs_diff(&self, other: &Section) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    /// Largest per-base-point deviation, with the offending base point.
    pub fn worst_point(&self, other: &Section) -> (f64, usize) {
        (0..self.bundle.action().base_size())
            .map(|b| (max_abs_diff(self.value(b), other.value(b)), b))
            .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
    }
}

/// A tabulated Mackey section `(h, b) -> f~(h, b)`, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct MackeySection {
    bundle: Arc<EquivariantBundle>,
    data: Vec<f64>,
}

impl MackeySection {
    /// `values[h][b]` is the vector at `(h, b)`.
    pub fn new(bundle: Arc<EquivariantBundle>, values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let ng = bundle.action().group().order();
        if values.len() != ng {
            return Err(Error::Structural(format!("Mackey section has {} rows for {ng} elements", values.len())));
        }
        let mut data = Vec::with_capacity(ng * bundle.total_dim());
        for row in values {
            let s = Section::new(bundle.clone(), row)?;
            data.extend_from_slice(&s.data);
        }
        Ok(MackeySection { bundle, data })
    }

    pub fn zeros(bundle: Arc<EquivariantBundle>) -> Self {
        let len = bundle.action().group().order() * bundle.total_dim();
        MackeySection { data: vec![0.0; len], bundle }
    }

    /// Independent random entries; generically violates periodicity.
    pub fn random_table(bundle: Arc<EquivariantBundle>, rng: &mut SeededRng) -> Self {
        let len = bundle.action().group().order() * bundle.total_dim();
        MackeySection { data: rng.vec(len), bundle }
    }

    pub fn bundle(&self) -> &Arc<EquivariantBundle> {
        &self.bundle
    }

    #[inline]
    fn offset(&self, h: usize, b: usize) -> usize {
        h * self.bundle.total_dim() + self.bundle.offset(b)
    }

    #[inline]
    pub fn value(&self, h: usize, b: usize) -> &[f64] {
        let off = self.offset(h, b);
        &self.data[off..off + self.bundle.fiber_dim(b)]
    }

    pub(crate) fn value_mut(&mut self, h: usize, b: usize) -> &mut [f64] {
        let off = self.offset(h, b);
        let d = self.bundle.fiber_dim(b);
        &mut self.data[off..off + d]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn from_flat(bundle: Arc<EquivariantBundle>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), bundle.action().group().order() * bundle.total_dim());
        MackeySection { bundle, data }
    }

    pub fn values(&self) -> Vec<Vec<Vec<f64>>> {
        let (ng, nb) = (self.bundle.action().group().order(), self.bundle.action().base_size());
        (0..ng).map(|h| (0..nb).map(|b| self.value(h, b).to_vec()).collect()).collect()
    }

    pub fn add_scaled(&self, other: &MackeySection, factor: f64) -> MackeySection {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + factor * b).collect();
        MackeySection { bundle: self.bundle.clone(), data }
    }

    pub fn max_abs_diff(&self, other: &MackeySection) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

/// `(g.f)(b) = A(g, g^-1.b) f(g^-1.b)`.
pub fn act_on_section(g: usize, f: &Section) -> Section {
    let bundle = f.bundle();
    let action = bundle.action();
    let gi = action.group().inv(g);
    let mut out = Section::zeros(bundle.clone());
    for b in 0..action.base_size() {
        let src = action.act(gi, b);
        bundle.matrix(g, src).mul_vec_acc(f.value(src), 1.0, out.value_mut(b));
    }
    out
}

/// `(g.m)(h, b) = m(g^-1 h, b)`.
pub fn act_on_mackey(g: usize, m: &MackeySection) -> MackeySection {
    let bundle = m.bundle();
    let group = bundle.action().group();
    let gi = group.inv(g);
    let row = bundle.total_dim();
    let mut data = vec![0.0; m.data.len()];
    for h in 0..group.order() {
        let src = group.mul(gi, h);
        data[h * row..(h + 1) * row].copy_from_slice(&m.data[src * row..(src + 1) * row]);
    }
    MackeySection { bundle: bundle.clone(), data }
}

/// `f~(h, b) = A(h^-1, h.b) f(h.b)`.
pub fn section_to_mackey(f: &Section) -> MackeySection {
    let bundle = f.bundle();
    let action = bundle.action();
    let group = action.group();
    let mut out = MackeySection::zeros(bundle.clone());
    for h in 0..group.order() {
        let hi = group.inv(h);
        for b in 0..action.base_size() {
            let c = action.act(h, b);
            bundle.matrix(hi, c).mul_vec_acc(f.value(c), 1.0, out.value_mut(h, b));
        }
    }
    out
}

/// Evaluation at the identity, `f(b) = f~(e, b)`.
pub fn mackey_to_section(m: &MackeySection) -> Section {
    let bundle = m.bundle();
    let e = bundle.action().group().identity();
    let row = bundle.total_dim();
    Section { bundle: bundle.clone(), data: m.data[e * row..(e + 1) * row].to_vec() }
}

/// Largest violation of `m(h, g.b) = A(g, b) m(hg, b)` over all `(g, h, b)`.
pub fn validate_mackey(m: &MackeySection, tolerance: f64) -> ValidationReport {
    let bundle = m.bundle();
    let action = bundle.action();
    let group = action.group();
    let mut report = ValidationReport::new("mackey_periodicity", tolerance);
    let mut buf = Vec::new();
    for g in 0..group.order() {
        for b in 0..action.base_size() {
            let gb = action.act(g, b);
            let a = bundle.matrix(g, b);
            for h in 0..group.order() {
                buf.clear();
                buf.resize(bundle.fiber_dim(gb), 0.0);
                a.mul_vec_acc(m.value(group.mul(h, g), b), 1.0, &mut buf);
                let dev = max_abs_diff(m.value(h, gb), &buf);
                report.record(dev, || witness(&[("g", g), ("h", h), ("b", b)]));
            }
        }
    }
    report
}

/// Checks that a section or Mackey section lives on `bundle`.
pub(crate) fn ensure_section_bundle(expected: &EquivariantBundle, got: &EquivariantBundle) -> Result<()> {
    if expected.same_shape(got) && expected.fiber_dims == got.fiber_dims {
        Ok(())
    } else {
        Err(Error::Structural("section belongs to a different bundle".into()))
    }
}

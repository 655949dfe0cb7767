//! Brute-force reference evaluations, written directly from the defining sums
//! with no shared code paths beyond the table accessors.

#![allow(dead_code)]

use equicorr::bundle::{EquivariantBundle, Section};
use equicorr::group::GroupAction;
use equicorr::linalg::Matrix;
use equicorr::measures::{GroupMeasureFamily, OrbitMeasureFamily, StabilizerMeasureFamily};
use equicorr::transform::{DeltaFunction, Kernel, ThetaMap};
use equicorr::xcorr::Filter;

/// Dense table indexed `[b][c]`, zero blocks where nothing is stored.
pub type DenseKernel = Vec<Vec<Matrix>>;
/// Dense table indexed `[b][h]`.
pub type DenseFilter = Vec<Vec<Matrix>>;

fn zero(rows: usize, cols: usize) -> Matrix {
    Matrix::zeros(rows, cols)
}

/// Largest group index mapping `b` to `c`.
pub fn last_rep(action: &GroupAction, b: usize, c: usize) -> Option<usize> {
    (0..action.group().order()).rev().find(|&k| action.act(k, b) == c)
}

pub fn stabilizer(action: &GroupAction, b: usize) -> Vec<usize> {
    (0..action.group().order()).filter(|&h| action.act(h, b) == b).collect()
}

pub fn dense_filter(w: &Filter) -> DenseFilter {
    let action = w.domain().action();
    (0..action.base_size())
        .map(|b| {
            (0..action.group().order())
                .map(|h| w.get(h, b).cloned().unwrap_or_else(|| zero(w.codomain().fiber_dim(b), w.domain().fiber_dim(b))))
                .collect()
        })
        .collect()
}

pub fn dense_kernel(k: &Kernel) -> DenseKernel {
    let action = k.domain().action();
    let nb = action.base_size();
    (0..nb)
        .map(|b| {
            (0..nb)
                .map(|c| k.get(c, b).cloned().unwrap_or_else(|| zero(k.codomain().fiber_dim(b), k.domain().fiber_dim(c))))
                .collect()
        })
        .collect()
}

/// `kappa(c, b) = sum_{h in G_b} nu_b(h) omega(k h, b) A_E(h^-1 k^-1, c)` with `k`
/// the largest representative of `c`.
pub fn project(w: &Filter, nu: &StabilizerMeasureFamily) -> DenseKernel {
    let e: &EquivariantBundle = w.domain();
    let action = e.action();
    let g = action.group();
    let omega = dense_filter(w);
    let nb = action.base_size();
    let mut out = vec![Vec::new(); nb];
    for b in 0..nb {
        for c in 0..nb {
            let mut acc = zero(w.codomain().fiber_dim(b), e.fiber_dim(c));
            if let Some(k) = last_rep(action, b, c) {
                for h in stabilizer(action, b) {
                    let weight = nu.weight(b, h).expect("stabilizer element");
                    let kh = g.mul(k, h);
                    let back = g.inv(kh);
                    acc.add_assign_scaled(&omega[b][kh].mul(e.matrix(back, c)), weight);
                }
            }
            out[b].push(acc);
        }
    }
    out
}

/// `omega(h, b) = delta(theta(h.b, b)^-1 h, b) kappa(h.b, b) A_E(h, b)`.
pub fn lift(k: &Kernel, theta: &ThetaMap, delta: &DeltaFunction) -> DenseFilter {
    let e = k.domain();
    let action = e.action();
    let g = action.group();
    let kappa = dense_kernel(k);
    let nb = action.base_size();
    let mut out = vec![Vec::new(); nb];
    for b in 0..nb {
        for h in 0..g.order() {
            let c = action.act(h, b);
            let mut m = zero(k.codomain().fiber_dim(b), e.fiber_dim(b));
            if let Some(t) = theta.get(c, b) {
                let s = g.mul(g.inv(t), h);
                if let Some(d) = delta.value(s, b) {
                    m = kappa[b][c].mul(e.matrix(h, b)).scale(d);
                }
            }
            out[b].push(m);
        }
    }
    out
}

pub fn dense_gap(a: &[Vec<Matrix>], b: &[Vec<Matrix>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x.max_abs_diff(y)))
        .fold(0.0, f64::max)
}

/// `(omega * f~)(e, b) = sum_k mu_b(k) omega(k, b) A_E(k^-1, k.b) f(k.b)`.
pub fn xcorr_at_identity(w: &Filter, mu: &GroupMeasureFamily, f: &Section) -> Vec<Vec<f64>> {
    let e = w.domain();
    let action = e.action();
    let g = action.group();
    (0..action.base_size())
        .map(|b| {
            let mut acc = vec![0.0; w.codomain().fiber_dim(b)];
            for k in 0..g.order() {
                if let Some(m) = w.get(k, b) {
                    let c = action.act(k, b);
                    let pulled = e.matrix(g.inv(k), c).mul_vec(f.value(c));
                    for (a, v) in acc.iter_mut().zip(m.mul_vec(&pulled)) {
                        *a += mu.weight(b, k) * v;
                    }
                }
            }
            acc
        })
        .collect()
}

/// `T(f)(b) = sum_c mubar_b(c) kappa(c, b) f(c)`.
pub fn transform(k: &Kernel, mubar: &OrbitMeasureFamily, f: &Section) -> Vec<Vec<f64>> {
    let nb = k.domain().action().base_size();
    (0..nb)
        .map(|b| {
            let mut acc = vec![0.0; k.codomain().fiber_dim(b)];
            for c in 0..nb {
                if let (Some(m), Some(w)) = (k.get(c, b), mubar.weight(b, c)) {
                    for (a, v) in acc.iter_mut().zip(m.mul_vec(f.value(c))) {
                        *a += w * v;
                    }
                }
            }
            acc
        })
        .collect()
}

pub fn vec_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Both sides of the decomposition identity at `b`, using representatives
/// chosen by `pick`.
pub fn fubini_sides(
    mu: &GroupMeasureFamily,
    nu: &StabilizerMeasureFamily,
    mubar: &OrbitMeasureFamily,
    f: &[f64],
    b: usize,
    mut pick: impl FnMut(usize) -> usize,
) -> (f64, f64) {
    let action = mu.action();
    let g = action.group();
    let lhs: f64 = (0..g.order()).map(|x| mu.weight(b, x) * f[x]).sum();
    let mut rhs = 0.0;
    for c in 0..action.base_size() {
        let Some(w) = mubar.weight(b, c) else { continue };
        let k = pick(c);
        let inner: f64 = stabilizer(action, b).into_iter().map(|h| nu.weight(b, h).unwrap() * f[g.mul(k, h)]).sum();
        rhs += w * inner;
    }
    (lhs, rhs)
}

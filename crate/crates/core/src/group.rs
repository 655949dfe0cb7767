//! Finite groups given by Cayley tables and their actions on finite base sets.
//!
//! Elements and base points are dense indices. Orbits, stabilizers and coset
//! representatives are materialized once when an action is built.

use std::fmt;

use crate::error::{Error, Result};
use crate::report::{witness, ValidationReport};
use crate::rng::SeededRng;

/// Exhaustive axiom scans up to this many group elements.
const EXHAUSTIVE_GROUP_ORDER: usize = 64;
/// Exhaustive action scans while `|G|^2 |B|` stays below this.
const EXHAUSTIVE_ACTION_CELLS: usize = 1_000_000;
const SAMPLED_TRIPLES: usize = 200_000;

#[derive(Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    labels: Vec<String>,
    cayley: Vec<usize>,
    inv: Vec<usize>,
    identity: usize,
}

impl fmt::Debug for FiniteGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteGroup").field("order", &self.order()).field("identity", &self.identity).finish()
    }
}

impl FiniteGroup {
    /// Assembles a group from its tables. Only shapes and index ranges are
    /// checked here; the axioms are checked by [`FiniteGroup::validate`].
    pub fn new(labels: Vec<String>, cayley: Vec<usize>, inv: Vec<usize>, identity: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Structural("a group needs at least one element".into()));
        }
        if cayley.len() != n * n {
            return Err(Error::Structural(format!("Cayley table has {} entries, expected {}", cayley.len(), n * n)));
        }
        if inv.len() != n {
            return Err(Error::Structural(format!("inverse table has {} entries, expected {n}", inv.len())));
        }
        if identity >= n {
            return Err(Error::Structural(format!("identity index {identity} out of range")));
        }
        if let Some(bad) = cayley.iter().chain(&inv).find(|&&x| x >= n) {
            return Err(Error::Structural(format!("table entry {bad} out of range for {n} elements")));
        }
        Ok(FiniteGroup { labels, cayley, inv, identity })
    }

    /// Builds a group from a Cayley table alone, locating the identity and
    /// inverses.
    pub fn from_cayley(labels: Vec<String>, cayley: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        if cayley.len() != n * n || n == 0 {
            return Err(Error::Structural(format!("Cayley table has {} entries, expected {}", cayley.len(), n * n)));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|g| cayley[e * n + g] == g && cayley[g * n + e] == g))
            .ok_or_else(|| Error::Structural("Cayley table has no two-sided identity".into()))?;
        let inv = (0..n)
            .map(|g| {
                (0..n)
                    .find(|&h| cayley[g * n + h] == identity && cayley[h * n + g] == identity)
                    .ok_or_else(|| Error::Structural(format!("element {g} has no inverse")))
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteGroup::new(labels, cayley, inv, identity)
    }

    pub fn cyclic(n: usize) -> Self {
        assert!(n >= 1, "cyclic group order must be positive");
        let labels = (0..n).map(|k| k.to_string()).collect();
        let cayley = (0..n * n).map(|i| (i / n + i % n) % n).collect();
        let inv = (0..n).map(|k| (n - k) % n).collect();
        FiniteGroup { labels, cayley, inv, identity: 0 }
    }

    pub fn trivial() -> Self {
        FiniteGroup::cyclic(1)
    }

    /// Dihedral group of order `2n`. Element `k + n*j` is `r^k s^j`, so
    /// `(r^a s^i)(r^b s^j) = r^(a + (-1)^i b) s^(i+j)`.
    pub fn dihedral(n: usize) -> Self {
        assert!(n >= 1, "dihedral group needs n >= 1");
        let order = 2 * n;
        let decode = |x: usize| (x % n, x / n);
        let encode = |k: usize, j: usize| k % n + n * (j % 2);
        let labels = (0..order)
            .map(|x| {
                let (k, j) = decode(x);
                if j == 0 { format!("r{k}") } else { format!("r{k}s") }
            })
            .collect();
        let mut cayley = vec![0; order * order];
        for x in 0..order {
            for y in 0..order {
                let (a, i) = decode(x);
                let (b, j) = decode(y);
                let rot = if i == 0 { a + b } else { a + n - b };
                cayley[x * order + y] = encode(rot, i + j);
            }
        }
        let inv = (0..order)
            .map(|x| {
                let (k, j) = decode(x);
                if j == 0 { encode(n - k, 0) } else { x }
            })
            .collect();
        FiniteGroup { labels, cayley, inv, identity: 0 }
    }

    /// Direct product `A x B`. The pair `(a, b)` has index `a + |A| * b`, so the
    /// first coordinate varies fastest.
    pub fn product(a: &FiniteGroup, b: &FiniteGroup) -> Self {
        let (na, nb) = (a.order(), b.order());
        let n = na * nb;
        let labels = (0..n).map(|x| format!("({},{})", a.labels[x % na], b.labels[x / na])).collect();
        let mut cayley = vec![0; n * n];
        for x in 0..n {
            for y in 0..n {
                let first = a.mul(x % na, y % na);
                let second = b.mul(x / na, y / na);
                cayley[x * n + y] = first + na * second;
            }
        }
        let inv = (0..n).map(|x| a.inv(x % na) + na * b.inv(x / na)).collect();
        FiniteGroup { labels, cayley, inv, identity: a.identity + na * b.identity }
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    #[inline]
    pub fn mul(&self, g: usize, h: usize) -> usize {
        self.cayley[g * self.order() + h]
    }

    #[inline]
    pub fn inv(&self, g: usize) -> usize {
        self.inv[g]
    }

    /// Conjugation `g h g^-1`.
    #[inline]
    pub fn conj(&self, g: usize, h: usize) -> usize {
        self.mul(self.mul(g, h), self.inv(g))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, g: usize) -> &str {
        &self.labels[g]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn cayley_table(&self) -> &[usize] {
        &self.cayley
    }

    pub fn inverse_table(&self) -> &[usize] {
        &self.inv
    }

    /// Scans the identity, inverse and associativity laws. Associativity is
    /// exhaustive up to 64 elements and sampled above that.
    pub fn validate(&self) -> ValidationReport {
        let n = self.order();
        let e = self.identity;
        let mut report = ValidationReport::new("group_axioms", 0.0);
        for g in 0..n {
            let id_ok = self.mul(e, g) == g && self.mul(g, e) == g;
            report.record(if id_ok { 0.0 } else { 1.0 }, || witness(&[("identity_law", g)]));
            let inv_ok = self.mul(g, self.inv(g)) == e && self.mul(self.inv(g), g) == e;
            report.record(if inv_ok { 0.0 } else { 1.0 }, || witness(&[("inverse_law", g)]));
        }
        let mut check = |a: usize, b: usize, c: usize| {
            let ok = self.mul(self.mul(a, b), c) == self.mul(a, self.mul(b, c));
            report.record(if ok { 0.0 } else { 1.0 }, || witness(&[("a", a), ("b", b), ("c", c)]));
        };
        if n <= EXHAUSTIVE_GROUP_ORDER {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        check(a, b, c);
                    }
                }
            }
        } else {
            let mut rng = SeededRng::derive(0, "group_axioms");
            for _ in 0..SAMPLED_TRIPLES {
                let (a, b, c) = (rng.index(n), rng.index(n), rng.index(n));
                check(a, b, c);
            }
        }
        report
    }
}

/// The orbit `G.b`, members sorted by base index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Orbit {
    pub base_point: usize,
    pub members: Vec<usize>,
}

/// For every `c` in the orbit of `anchor`, the smallest-index `k` with `k.anchor = c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CosetSection {
    pub anchor: usize,
    reps: Vec<Option<usize>>,
}

impl CosetSection {
    pub fn rep(&self, c: usize) -> Option<usize> {
        self.reps.get(c).copied().flatten()
    }

    /// `(c, k_c)` pairs in ascending `c`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.reps.iter().enumerate().filter_map(|(c, k)| k.map(|k| (c, k)))
    }

    /// Replaces each representative by `k_c * s_c` for caller-chosen `s_c`,
    /// e.g. random stabilizer elements. The caller is responsible for keeping
    /// `s_c` inside the stabilizer of the anchor.
    pub fn reseat(&self, group: &FiniteGroup, mut shift: impl FnMut(usize) -> usize) -> CosetSection {
        let reps = self.reps.iter().enumerate().map(|(c, k)| k.map(|k| group.mul(k, shift(c)))).collect();
        CosetSection { anchor: self.anchor, reps }
    }
}

#[derive(Clone)]
pub struct GroupAction {
    group: FiniteGroup,
    base_labels: Vec<String>,
    table: Vec<usize>,
    orbits: Vec<Vec<usize>>,
    orbit_rep: Vec<usize>,
    stabilizers: Vec<Vec<usize>>,
    reps: Vec<Vec<usize>>,
}

impl fmt::Debug for GroupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupAction")
            .field("group_order", &self.group.order())
            .field("base_size", &self.base_size())
            .finish()
    }
}

impl PartialEq for GroupAction {
    fn eq(&self, other: &Self) -> bool {
        self.group == other.group && self.table == other.table && self.base_labels == other.base_labels
    }
}

const NO_REP: usize = usize::MAX;

impl GroupAction {
    /// Action from a row-major table `table[g * |B| + b] = g.b`.
    pub fn new(group: FiniteGroup, base_labels: Vec<String>, table: Vec<usize>) -> Result<Self> {
        let (ng, nb) = (group.order(), base_labels.len());
        if table.len() != ng * nb {
            return Err(Error::Structural(format!("action table has {} entries, expected {}", table.len(), ng * nb)));
        }
        if let Some(bad) = table.iter().find(|&&x| x >= nb) {
            return Err(Error::Structural(format!("action table entry {bad} out of range for {nb} base points")));
        }
        let mut orbits = Vec::with_capacity(nb);
        let mut stabilizers = Vec::with_capacity(nb);
        let mut reps = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut rep_row = vec![NO_REP; nb];
            let mut stab = Vec::new();
            for g in 0..ng {
                let c = table[g * nb + b];
                if rep_row[c] == NO_REP {
                    rep_row[c] = g;
                }
                if c == b {
                    stab.push(g);
                }
            }
            orbits.push((0..nb).filter(|&c| rep_row[c] != NO_REP).collect::<Vec<_>>());
            stabilizers.push(stab);
            reps.push(rep_row);
        }
        let orbit_rep = orbits.iter().map(|o| o.first().copied().unwrap_or(0)).collect();
        Ok(GroupAction { group, base_labels, table, orbits, orbit_rep, stabilizers, reps })
    }

    pub fn from_fn(group: FiniteGroup, base_size: usize, f: impl Fn(usize, usize) -> usize) -> Result<Self> {
        let labels = (0..base_size).map(|b| b.to_string()).collect();
        let table = (0..group.order() * base_size).map(|i| f(i / base_size, i % base_size)).collect();
        GroupAction::new(group, labels, table)
    }

    /// Left translation of a group on itself.
    pub fn regular(group: FiniteGroup) -> Self {
        let n = group.order();
        let labels = group.labels().to_vec();
        let table = (0..n * n).map(|i| group.mul(i / n, i % n)).collect();
        GroupAction::new(group, labels, table).expect("regular action tables are well-formed")
    }

    /// Every element fixes every point.
    pub fn trivial(group: FiniteGroup, base_size: usize) -> Self {
        GroupAction::from_fn(group, base_size, |_, b| b).expect("trivial action tables are well-formed")
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn base_size(&self) -> usize {
        self.base_labels.len()
    }

    pub fn base_labels(&self) -> &[String] {
        &self.base_labels
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    /// `g.b`. Panics on out-of-range indices; see [`GroupAction::try_act`].
    #[inline]
    pub fn act(&self, g: usize, b: usize) -> usize {
        self.table[g * self.base_size() + b]
    }

    pub fn try_act(&self, g: usize, b: usize) -> Result<usize> {
        if g >= self.group.order() || b >= self.base_size() {
            return Err(Error::Structural(format!("act({g}, {b}) out of range")));
        }
        Ok(self.act(g, b))
    }

    fn check_base(&self, b: usize) -> Result<()> {
        if b >= self.base_size() {
            return Err(Error::Structural(format!("base point {b} out of range")));
        }
        Ok(())
    }

    pub fn orbit(&self, b: usize) -> Result<Orbit> {
        self.check_base(b)?;
        Ok(Orbit { base_point: b, members: self.orbits[b].clone() })
    }

    pub fn stabilizer(&self, b: usize) -> Result<Vec<usize>> {
        self.check_base(b)?;
        Ok(self.stabilizers[b].clone())
    }

    pub fn coset_section(&self, b: usize) -> Result<CosetSection> {
        self.check_base(b)?;
        let reps = self.reps[b].iter().map(|&k| (k != NO_REP).then_some(k)).collect();
        Ok(CosetSection { anchor: b, reps })
    }

    /// Orbit members of `b`, ascending. Panics if `b` is out of range.
    pub fn orbit_members(&self, b: usize) -> &[usize] {
        &self.orbits[b]
    }

    /// Stabilizer of `b`, ascending. Panics if `b` is out of range.
    pub fn stabilizer_of(&self, b: usize) -> &[usize] {
        &self.stabilizers[b]
    }

    /// Smallest-index `k` with `k.b = c`, if `c` lies in the orbit of `b`.
    #[inline]
    pub fn rep(&self, b: usize, c: usize) -> Option<usize> {
        let k = self.reps[b][c];
        (k != NO_REP).then_some(k)
    }

    pub fn in_orbit(&self, b: usize, c: usize) -> bool {
        self.reps[b][c] != NO_REP
    }

    /// Smallest member of the orbit of `b`; the canonical fundamental-domain point.
    pub fn orbit_representative(&self, b: usize) -> usize {
        self.orbit_rep[b]
    }

    /// Orbit representatives in ascending order.
    pub fn fundamental_domain(&self) -> Vec<usize> {
        (0..self.base_size()).filter(|&b| self.orbit_rep[b] == b).collect()
    }

    pub fn is_transitive(&self) -> bool {
        self.base_size() > 0 && self.orbits[0].len() == self.base_size()
    }

    /// Scans `e.b = b` and `(gh).b = g.(h.b)`.
    pub fn validate(&self) -> ValidationReport {
        let (ng, nb) = (self.group.order(), self.base_size());
        let e = self.group.identity();
        let mut report = ValidationReport::new("action_axioms", 0.0);
        for b in 0..nb {
            let ok = self.act(e, b) == b;
            report.record(if ok { 0.0 } else { 1.0 }, || witness(&[("identity_on", b)]));
        }
        let mut check = |g: usize, h: usize, b: usize| {
            let ok = self.act(self.group.mul(g, h), b) == self.act(g, self.act(h, b));
            report.record(if ok { 0.0 } else { 1.0 }, || witness(&[("g", g), ("h", h), ("b", b)]));
        };
        if ng * ng * nb <= EXHAUSTIVE_ACTION_CELLS {
            for g in 0..ng {
                for h in 0..ng {
                    for b in 0..nb {
                        check(g, h, b);
                    }
                }
            }
        } else {
            let mut rng = SeededRng::derive(0, "action_axioms");
            for _ in 0..SAMPLED_TRIPLES {
                check(rng.index(ng), rng.index(ng), rng.index(nb));
            }
        }
        report
    }
}

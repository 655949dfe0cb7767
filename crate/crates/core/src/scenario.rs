//! Built-in scenarios and the assembled scenario type.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::bundle::EquivariantBundle;
use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupAction};
use crate::linalg::Matrix;
use crate::measures::{
    construct_normalized_families, GroupMeasureFamily, OrbitMeasureFamily, PsiFunction, StabilizerMeasureFamily,
};
use crate::quadrature::LineGrid;
use crate::rng::SeededRng;
use crate::transform::{dirac_delta, lift_kernel_to_filter, project_filter_to_kernel, DeltaFunction, Kernel, ThetaMap};
use crate::xcorr::{random_valid_filter, reynolds_filter, Filter};

pub const DEFAULT_CONSTRAINT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_THEOREM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Validation of tabulated data against its constraint.
    pub constraint: f64,
    /// Identities that hold exactly up to rounding.
    pub theorem: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { constraint: DEFAULT_CONSTRAINT_TOLERANCE, theorem: DEFAULT_THEOREM_TOLERANCE }
    }
}

/// Declared properties of the measure families; each is checked when present.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Flags {
    pub strictly_positive: Option<bool>,
    pub haar: Option<bool>,
    pub left_invariant: Option<bool>,
}

/// Band layout of the three-band torus kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandGeometry {
    pub n: usize,
    pub spacing: usize,
    pub eps: usize,
}

impl BandGeometry {
    /// Signed representative of `x mod n` in `(-n/2, n/2]`.
    pub fn signed(&self, x: usize) -> i64 {
        let n = self.n as i64;
        let r = (x as i64).rem_euclid(n);
        if 2 * r > n {
            r - n
        } else {
            r
        }
    }

    pub fn wrap(&self, x: i64) -> usize {
        x.rem_euclid(self.n as i64) as usize
    }

    /// `(band, offset)` of a difference `c - b`, if it lies in a band.
    pub fn locate(&self, diff: usize) -> Option<(i64, i64)> {
        let d = self.signed(diff);
        let (s, eps) = (self.spacing as i64, self.eps as i64);
        (-1..=1).map(|i| (i, d - i * s)).find(|&(_, j)| j.abs() <= eps)
    }

    /// Kernel profile on band `i` at offset `j`; never zero.
    pub fn profile(i: i64, j: i64) -> f64 {
        1.0 + 0.5 * (i + 1) as f64 + 1.0 / (2.0 + j.abs() as f64)
    }

    /// Group element `(x, y)` with index `x + n y`.
    pub fn element(&self, x: i64, y: i64) -> usize {
        self.wrap(x) + self.n * self.wrap(y)
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub action: Arc<GroupAction>,
    pub input: Arc<EquivariantBundle>,
    pub output: Arc<EquivariantBundle>,
    pub mu: GroupMeasureFamily,
    pub nu: StabilizerMeasureFamily,
    pub mubar: OrbitMeasureFamily,
    pub psi: Option<PsiFunction>,
    pub filter: Option<Filter>,
    pub kernel: Option<Kernel>,
    /// Named lift data for the kernel.
    pub thetas: BTreeMap<String, ThetaMap>,
    pub delta: Option<DeltaFunction>,
    pub tolerances: Tolerances,
    pub flags: Flags,
    pub bands: Option<BandGeometry>,
    pub circle_width: Option<usize>,
}

impl Scenario {
    /// The supplied delta, or the Dirac delta of the stabilizer family.
    pub fn delta_or_dirac(&self) -> Result<DeltaFunction> {
        match &self.delta {
            Some(d) => Ok(d.clone()),
            None => dirac_delta(&self.nu),
        }
    }
}

/// A parsed builtin scenario name.
#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    Cyclic(usize),
    Dihedral { n: usize, sign: bool },
    Torus(usize),
    TorusBands { n: usize, spacing: usize, eps: usize },
    CircleGrid { n: usize, width: usize },
    LineGrid { truncation: usize, spacing: f64 },
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Cyclic(n) => write!(f, "cyclic({n})"),
            Builtin::Dihedral { n, sign: false } => write!(f, "dihedral({n})"),
            Builtin::Dihedral { n, sign: true } => write!(f, "dihedral({n},sign)"),
            Builtin::Torus(n) => write!(f, "torus({n})"),
            Builtin::TorusBands { n, spacing, eps } => write!(f, "torus-bands({n},{spacing},{eps})"),
            Builtin::CircleGrid { n, width } => write!(f, "circle-grid({n},{width})"),
            Builtin::LineGrid { truncation, spacing } => write!(f, "line-grid({truncation},{spacing})"),
        }
    }
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Domain(format!("{what} must be a nonnegative integer, got {s:?}")))
}

fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (
                a.trim().parse().map_err(|_| Error::Domain(format!("bad number {s:?}")))?,
                b.trim().parse().map_err(|_| Error::Domain(format!("bad number {s:?}")))?,
            );
            a / b
        }
        None => s.parse().map_err(|_| Error::Domain(format!("bad number {s:?}")))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("bad number {s:?}")))
    }
}

impl Builtin {
    /// Parses names such as `cyclic(8)`, `dihedral(4,sign)` or `torus-bands(16,5,1)`.
    /// Returns `None` when the text does not look like a builtin at all.
    pub fn parse(text: &str) -> Option<Result<Builtin>> {
        let text = text.trim();
        let (name, inner) = match text.find('(') {
            Some(open) if text.ends_with(')') => (&text[..open], &text[open + 1..text.len() - 1]),
            Some(_) => return None,
            None if matches!(text, "torus-bands" | "line-grid") => (text, ""),
            None => return None,
        };
        let args: Vec<&str> = inner.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
        let arity = |lo: usize, hi: usize| -> Result<()> {
            if (lo..=hi).contains(&args.len()) {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} takes {lo} to {hi} arguments, got {}", args.len())))
            }
        };
        let parsed = (|| -> Result<Builtin> {
            match name {
                "cyclic" => {
                    arity(1, 1)?;
                    Ok(Builtin::Cyclic(parse_usize(args[0], "n")?))
                }
                "dihedral" => {
                    arity(1, 2)?;
                    let sign = match args.get(1) {
                        None | Some(&"trivial") => false,
                        Some(&"sign") => true,
                        Some(other) => return Err(Error::Domain(format!("unknown dihedral bundle {other:?}"))),
                    };
                    Ok(Builtin::Dihedral { n: parse_usize(args[0], "n")?, sign })
                }
                "torus" => {
                    arity(1, 1)?;
                    Ok(Builtin::Torus(parse_usize(args[0], "N")?))
                }
                "torus-bands" => {
                    arity(0, 3)?;
                    let n = args.first().map(|a| parse_usize(a, "N")).transpose()?.unwrap_or(16);
                    let spacing = args.get(1).map(|a| parse_usize(a, "spacing")).transpose()?.unwrap_or((n / 3).max(1));
                    let eps = args.get(2).map(|a| parse_usize(a, "eps")).transpose()?.unwrap_or(1);
                    Ok(Builtin::TorusBands { n, spacing, eps })
                }
                "circle-grid" => {
                    arity(1, 2)?;
                    let n = parse_usize(args[0], "n")?;
                    let width = args.get(1).map(|a| parse_usize(a, "width")).transpose()?.unwrap_or(1);
                    Ok(Builtin::CircleGrid { n, width })
                }
                "line-grid" => {
                    arity(0, 2)?;
                    let truncation = args.first().map(|a| parse_usize(a, "N")).transpose()?.unwrap_or(1);
                    let spacing = args.get(1).map(|a| parse_real(a)).transpose()?.unwrap_or(0.125);
                    Ok(Builtin::LineGrid { truncation, spacing })
                }
                _ => Err(Error::Domain(format!("unknown scenario {name:?}"))),
            }
        })();
        Some(parsed)
    }

    pub fn build(&self) -> Result<Scenario> {
        match *self {
            Builtin::Cyclic(n) => cyclic(n),
            Builtin::Dihedral { n, sign } => dihedral(n, sign),
            Builtin::Torus(n) => torus(n),
            Builtin::TorusBands { n, spacing, eps } => torus_bands(n, spacing, eps),
            Builtin::CircleGrid { n, width } => circle_grid(n, width),
            Builtin::LineGrid { .. } => Err(Error::Domain(
                "line-grid is a quadrature scenario without finite tables; only the battery applies".into(),
            )),
        }
    }

    pub fn line_grid(&self) -> Option<Result<LineGrid>> {
        match *self {
            Builtin::LineGrid { truncation, spacing } => Some(LineGrid::new(truncation, spacing)),
            _ => None,
        }
    }
}

/// The action of `Z_N x Z_N` on `Z_N` by `(x, y).b = x + s y + b`.
pub fn torus_action(n: usize, spacing: usize) -> Result<Arc<GroupAction>> {
    if n == 0 {
        return Err(Error::Domain("torus size must be at least 1".into()));
    }
    let g = FiniteGroup::product(&FiniteGroup::cyclic(n), &FiniteGroup::cyclic(n));
    Ok(Arc::new(GroupAction::from_fn(g, n, |x, b| (x % n + spacing * (x / n) + b) % n)?))
}

/// `D_n` acting on the vertices of the regular `n`-gon; `r^k s^j . v = k + (-1)^j v`.
pub fn dihedral_action(n: usize) -> Result<Arc<GroupAction>> {
    if n < 2 {
        return Err(Error::Domain("dihedral scenarios need n >= 2".into()));
    }
    Ok(Arc::new(GroupAction::from_fn(FiniteGroup::dihedral(n), n, |x, v| {
        let (k, j) = (x % n, x / n);
        (k + if j == 0 { v } else { n - v }) % n
    })?))
}

/// For each diagonal orbit of the kernel support, picks the smallest element
/// carrying `b` to `c` that commutes with the joint stabilizer of `(c, b)`,
/// then transports it by conjugation.
pub fn build_theta(kappa: &Kernel) -> Result<ThetaMap> {
    let action = kappa.domain().action();
    let group = action.group();
    let mut chosen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (c0, b0) in kappa.support() {
        if chosen.contains_key(&(c0, b0)) {
            continue;
        }
        let joint: Vec<usize> =
            action.stabilizer_of(b0).iter().copied().filter(|&s| action.act(s, c0) == c0).collect();
        let t = (0..group.order())
            .find(|&k| action.act(k, b0) == c0 && joint.iter().all(|&s| group.mul(s, k) == group.mul(k, s)))
            .ok_or_else(|| Error::Precondition(format!("no equivariant choice of theta exists at (c={c0}, b={b0})")))?;
        for g in 0..group.order() {
            chosen.entry((action.act(g, c0), action.act(g, b0))).or_insert_with(|| group.conj(g, t));
        }
    }
    let entries = kappa.support().into_iter().map(|(c, b)| (c, b, chosen[&(c, b)])).collect();
    ThetaMap::new(action.clone(), entries)
}

struct Parts {
    name: String,
    action: Arc<GroupAction>,
    bundle: Arc<EquivariantBundle>,
    mu_scale: f64,
}

/// Families from the identity indicator, rescaled by a quadrature weight.
fn normalized(action: &Arc<GroupAction>, mu_scale: f64) -> Result<(PsiFunction, GroupMeasureFamily, StabilizerMeasureFamily, OrbitMeasureFamily)> {
    let psi = PsiFunction::identity_indicator(action.clone());
    let fam = construct_normalized_families(&psi)?;
    let mu = fam.mu.scaled(mu_scale)?;
    let mubar = fam.mubar.scaled(mu_scale)?;
    let psi = psi.scaled(1.0 / mu_scale)?;
    Ok((psi, mu, fam.nu, mubar))
}

fn assemble(parts: Parts, filter: Filter) -> Result<Scenario> {
    let (psi, mu, nu, mubar) = normalized(&parts.action, parts.mu_scale)?;
    let kernel = project_filter_to_kernel(&filter, &nu)?;
    let mut thetas = BTreeMap::new();
    thetas.insert("theta".to_string(), build_theta(&kernel)?);
    Ok(Scenario {
        name: parts.name,
        action: parts.action,
        input: parts.bundle.clone(),
        output: parts.bundle,
        mu,
        nu,
        mubar,
        psi: if parts.mu_scale == 1.0 { Some(psi) } else { None },
        filter: Some(filter),
        kernel: Some(kernel),
        thetas,
        delta: None,
        tolerances: Tolerances::default(),
        flags: Flags { strictly_positive: Some(true), haar: Some(true), left_invariant: Some(true) },
        bands: None,
        circle_width: None,
    })
}

fn scenario_filter(bundle: &Arc<EquivariantBundle>, name: &str) -> Result<Filter> {
    let mut rng = SeededRng::derive(0, &format!("scenario-filter/{name}"));
    random_valid_filter(bundle.clone(), bundle.clone(), &mut rng)
}

/// `Z_n` acting on itself, trivial line bundles.
pub fn cyclic(n: usize) -> Result<Scenario> {
    if n == 0 {
        return Err(Error::Domain("cyclic scenarios need n >= 1".into()));
    }
    let action = Arc::new(GroupAction::regular(FiniteGroup::cyclic(n)));
    let bundle = Arc::new(EquivariantBundle::trivial(action.clone(), 1));
    let name = Builtin::Cyclic(n).to_string();
    let filter = scenario_filter(&bundle, &name)?;
    assemble(Parts { name, action, bundle, mu_scale: 1.0 }, filter)
}

/// `D_n` on the `n`-gon with the trivial or the sign line bundle.
pub fn dihedral(n: usize, sign: bool) -> Result<Scenario> {
    let action = dihedral_action(n)?;
    let bundle = Arc::new(if sign {
        EquivariantBundle::from_representation(action.clone(), 1, |x| Matrix::scalar(if x < n { 1.0 } else { -1.0 }))?
    } else {
        EquivariantBundle::trivial(action.clone(), 1)
    });
    let name = Builtin::Dihedral { n, sign }.to_string();
    let filter = scenario_filter(&bundle, &name)?;
    assemble(Parts { name, action, bundle, mu_scale: 1.0 }, filter)
}

/// `Z_N x Z_N` on `Z_N` by `(x, y).b = x + y + b`.
pub fn torus(n: usize) -> Result<Scenario> {
    let action = torus_action(n, 1)?;
    let bundle = Arc::new(EquivariantBundle::trivial(action.clone(), 1));
    let name = Builtin::Torus(n).to_string();
    let filter = scenario_filter(&bundle, &name)?;
    assemble(Parts { name, action, bundle, mu_scale: 1.0 }, filter)
}

/// The torus with a kernel on three bands of half-width `eps` around the
/// offsets `-s, 0, s`, and the two lift choices `global` and `special`.
pub fn torus_bands(n: usize, spacing: usize, eps: usize) -> Result<Scenario> {
    if spacing == 0 || 4 * eps >= spacing {
        return Err(Error::Domain(format!("band half-width {eps} must be below a quarter of the spacing {spacing}")));
    }
    if 2 * spacing + 2 * eps + 1 > n {
        return Err(Error::Domain(format!("three bands of spacing {spacing} and half-width {eps} do not fit in Z_{n}")));
    }
    let geo = BandGeometry { n, spacing, eps };
    let action = torus_action(n, spacing)?;
    let bundle = Arc::new(EquivariantBundle::trivial(action.clone(), 1));
    let (psi, mu, nu, mubar) = normalized(&action, 1.0)?;
    let kernel = Kernel::from_fn(bundle.clone(), bundle.clone(), |c, b| {
        geo.locate((c + n - b) % n).map(|(i, j)| Matrix::scalar(BandGeometry::profile(i, j)))
    })?;
    let (global, special) = band_thetas(&geo, &kernel)?;
    let delta = dirac_delta(&nu)?;
    let filter = lift_kernel_to_filter(&kernel, &special, &delta)?;
    let mut thetas = BTreeMap::new();
    thetas.insert("global".to_string(), global);
    thetas.insert("special".to_string(), special);
    Ok(Scenario {
        name: Builtin::TorusBands { n, spacing, eps }.to_string(),
        action,
        input: bundle.clone(),
        output: bundle,
        mu,
        nu,
        mubar,
        psi: Some(psi),
        filter: Some(filter),
        kernel: Some(kernel),
        thetas,
        delta: Some(delta),
        tolerances: Tolerances::default(),
        flags: Flags { strictly_positive: Some(true), haar: Some(true), left_invariant: Some(true) },
        bands: Some(geo),
        circle_width: None,
    })
}

/// `theta_global(c, b) = (c - b, 0)` and `theta_special(c, b) = (c - b - i s, i)` on band `i`.
pub fn band_thetas(geo: &BandGeometry, kernel: &Kernel) -> Result<(ThetaMap, ThetaMap)> {
    let action = kernel.domain().action().clone();
    let mut global = Vec::new();
    let mut special = Vec::new();
    for (c, b) in kernel.support() {
        let diff = (c + geo.n - b) % geo.n;
        let (i, j) = geo.locate(diff).ok_or(Error::Coverage { c, b })?;
        global.push((c, b, geo.element(geo.signed(diff), 0)));
        special.push((c, b, geo.element(j, i)));
    }
    Ok((ThetaMap::new(action.clone(), global)?, ThetaMap::new(action, special)?))
}

/// Profile of the circle filter at signed offset `d`.
pub fn circle_profile(d: i64, width: usize) -> f64 {
    let t = d as f64 / (width as f64 + 1.0);
    (1.0 - t * t) * (1.0 + 0.25 * t)
}

/// `Z_n` rotations of an `n`-point grid on the circle, quadrature weight `2 pi / n`.
pub fn circle_grid(n: usize, width: usize) -> Result<Scenario> {
    if n == 0 {
        return Err(Error::Domain("circle grid needs at least one point".into()));
    }
    if 2 * width + 1 >= n {
        return Err(Error::Domain(format!("filter width {width} wraps around a grid of {n} points")));
    }
    let action = Arc::new(GroupAction::regular(FiniteGroup::cyclic(n)));
    let bundle = Arc::new(EquivariantBundle::trivial(action.clone(), 1));
    let filter = reynolds_filter(bundle.clone(), bundle.clone(), |h, _| {
        let d = if 2 * h > n { h as i64 - n as i64 } else { h as i64 };
        (d.unsigned_abs() as usize <= width).then(|| Matrix::scalar(circle_profile(d, width)))
    })?;
    let name = Builtin::CircleGrid { n, width }.to_string();
    let mut s = assemble(Parts { name, action, bundle, mu_scale: 2.0 * PI / n as f64 }, filter)?;
    s.circle_width = Some(width);
    Ok(s)
}

/// Every finite builtin at its default size.
pub fn default_builtins() -> Vec<Builtin> {
    vec![
        Builtin::Cyclic(8),
        Builtin::Dihedral { n: 4, sign: false },
        Builtin::Dihedral { n: 4, sign: true },
        Builtin::Torus(8),
        Builtin::TorusBands { n: 16, spacing: 5, eps: 1 },
        Builtin::CircleGrid { n: 32, width: 3 },
    ]
}

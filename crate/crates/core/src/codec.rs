//! The `equicorr-scenario/1` JSON format, section files and table exports.
//!
//! Group elements and base points are referenced by index. Every matrix is a
//! flat row-major array whose shape follows from the fiber dimensions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::{EquivariantBundle, MackeySection, Section};
use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupAction};
use crate::linalg::Matrix;
use crate::measures::{
    construct_normalized_families, solve_orbit_family, GroupMeasureFamily, OrbitMeasureFamily, PsiFunction,
    StabilizerMeasureFamily,
};
use crate::scenario::{Builtin, Flags, Scenario, Tolerances};
use crate::transform::{DeltaFunction, Kernel, ThetaMap};
use crate::xcorr::{expand_filter, CompressedFilter, Filter};

pub const SCHEMA: &str = "equicorr-scenario/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub labels: Vec<String>,
    /// `cayley[g * |G| + h]` is the index of `g h`.
    pub cayley: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub base_labels: Vec<String>,
    /// `table[g * |B| + b]` is the index of `g.b`.
    pub table: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub fiber_dims: Vec<usize>,
    /// `matrices[g * |B| + b]`, row-major `dim(g.b) x dim(b)`.
    pub matrices: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundlesSpec {
    #[serde(rename = "E")]
    pub input: BundleSpec,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub output: Option<BundleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamiliesSpec {
    Counting {
        #[serde(default = "one")]
        scale: f64,
    },
    NormalizedPsi {
        /// `psi[h][b]`.
        psi: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    Explicit {
        /// `mu[b][h]`.
        mu: Vec<Vec<f64>>,
        /// `nu[b]` over the ascending stabilizer of `b`.
        nu: Vec<Vec<f64>>,
        /// `mubar[b]` over the ascending orbit of `b`; solved when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mubar: Option<Vec<Vec<f64>>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub h: usize,
    pub matrix: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRow {
    pub b: usize,
    pub entries: Vec<MatrixEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    /// Rows only at the orbit representatives of the fundamental domain.
    #[serde(default)]
    pub compressed: bool,
    pub rows: Vec<FilterRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub c: usize,
    pub b: usize,
    pub matrix: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub entries: Vec<KernelEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaEntry {
    pub c: usize,
    pub b: usize,
    pub element: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub entries: Vec<ThetaEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strictly_positive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub haar: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_invariant: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    pub name: String,
    pub group: GroupSpec,
    pub action: ActionSpec,
    pub bundles: BundlesSpec,
    pub families: FamiliesSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSpec>,
    /// Additional named theta choices.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub thetas: BTreeMap<String, ThetaSpec>,
    /// `delta[b]` over the ascending stabilizer of `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<FlagsSpec>,
}

fn matrix(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<Matrix> {
    Matrix::from_row_major(rows, cols, data.to_vec())
        .map_err(|_| Error::Structural(format!("{what}: expected {} entries, got {}", rows * cols, data.len())))
}

fn bundle_from_spec(action: &Arc<GroupAction>, spec: &BundleSpec, name: &str) -> Result<EquivariantBundle> {
    let (ng, nb) = (action.group().order(), action.base_size());
    if spec.fiber_dims.len() != nb {
        return Err(Error::Structural(format!("bundle {name}: {} fiber dimensions for {nb} base points", spec.fiber_dims.len())));
    }
    if spec.matrices.len() != ng * nb {
        return Err(Error::Structural(format!("bundle {name}: {} matrices, expected {}", spec.matrices.len(), ng * nb)));
    }
    let mut mats = Vec::with_capacity(ng * nb);
    for g in 0..ng {
        for b in 0..nb {
            let shape = (spec.fiber_dims[action.act(g, b)], spec.fiber_dims[b]);
            mats.push(matrix(shape.0, shape.1, &spec.matrices[g * nb + b], &format!("bundle {name} at (g={g}, b={b})"))?);
        }
    }
    EquivariantBundle::new(action.clone(), spec.fiber_dims.clone(), mats)
}

fn bundle_to_spec(bundle: &EquivariantBundle) -> BundleSpec {
    BundleSpec {
        fiber_dims: bundle.fiber_dims().to_vec(),
        matrices: bundle.matrices().iter().map(|m| m.as_slice().to_vec()).collect(),
    }
}

fn check_index(i: usize, n: usize, what: &str) -> Result<()> {
    if i < n {
        Ok(())
    } else {
        Err(Error::Structural(format!("{what} index {i} out of range (size {n})")))
    }
}

pub fn filter_from_spec(input: &Arc<EquivariantBundle>, output: &Arc<EquivariantBundle>, spec: &FilterSpec) -> Result<Filter> {
    let action = input.action();
    let (ng, nb) = (action.group().order(), action.base_size());
    let mut rows: BTreeMap<usize, Vec<(usize, Matrix)>> = BTreeMap::new();
    for row in &spec.rows {
        check_index(row.b, nb, "filter base point")?;
        if rows.contains_key(&row.b) {
            return Err(Error::Structural(format!("filter row b={} appears twice", row.b)));
        }
        let mut entries = Vec::with_capacity(row.entries.len());
        for e in &row.entries {
            check_index(e.h, ng, "filter element")?;
            let what = format!("filter entry (h={}, b={})", e.h, row.b);
            entries.push((e.h, matrix(output.fiber_dim(row.b), input.fiber_dim(row.b), &e.matrix, &what)?));
        }
        rows.insert(row.b, entries);
    }
    if spec.compressed {
        let compressed = CompressedFilter {
            domain: input.clone(),
            codomain: output.clone(),
            rows: rows.into_iter().map(|(b, r)| (b, r.into_iter().filter(|(_, m)| !m.is_zero()).collect())).collect(),
        };
        expand_filter(&compressed, crate::scenario::DEFAULT_CONSTRAINT_TOLERANCE)
    } else {
        let dense = (0..nb).map(|b| rows.remove(&b).unwrap_or_default()).collect();
        Filter::new(input.clone(), output.clone(), dense)
    }
}

pub fn filter_to_spec(filter: &Filter) -> FilterSpec {
    let nb = filter.domain().action().base_size();
    FilterSpec {
        compressed: false,
        rows: (0..nb)
            .map(|b| FilterRow {
                b,
                entries: filter.row(b).iter().map(|(&h, m)| MatrixEntry { h, matrix: m.as_slice().to_vec() }).collect(),
            })
            .collect(),
    }
}

pub fn kernel_from_spec(input: &Arc<EquivariantBundle>, output: &Arc<EquivariantBundle>, spec: &KernelSpec) -> Result<Kernel> {
    let nb = input.action().base_size();
    let mut entries = Vec::with_capacity(spec.entries.len());
    for e in &spec.entries {
        check_index(e.c, nb, "kernel base point")?;
        check_index(e.b, nb, "kernel base point")?;
        let what = format!("kernel entry (c={}, b={})", e.c, e.b);
        entries.push((e.c, e.b, matrix(output.fiber_dim(e.b), input.fiber_dim(e.c), &e.matrix, &what)?));
    }
    Kernel::new(input.clone(), output.clone(), entries)
}

pub fn kernel_to_spec(kernel: &Kernel) -> KernelSpec {
    KernelSpec {
        entries: kernel
            .entries()
            .into_iter()
            .map(|(c, b, m)| KernelEntry { c, b, matrix: m.as_slice().to_vec() })
            .collect(),
    }
}

fn theta_from_spec(action: &Arc<GroupAction>, spec: &ThetaSpec) -> Result<ThetaMap> {
    ThetaMap::new(action.clone(), spec.entries.iter().map(|e| (e.c, e.b, e.element)).collect())
}

fn theta_to_spec(theta: &ThetaMap) -> ThetaSpec {
    ThetaSpec { entries: theta.entries().map(|(c, b, element)| ThetaEntry { c, b, element }).collect() }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.schema != SCHEMA {
            return Err(Error::Format(format!("unsupported schema {:?}, expected {SCHEMA:?}", file.schema)));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn into_scenario(self) -> Result<Scenario> {
        let group = match (self.group.identity, self.group.inverse) {
            (Some(identity), Some(inverse)) => FiniteGroup::new(self.group.labels, self.group.cayley, inverse, identity)?,
            _ => FiniteGroup::from_cayley(self.group.labels, self.group.cayley)?,
        };
        let axioms = group.validate();
        if !axioms.is_ok() {
            return Err(Error::Structural(format!("group table is not a group: {axioms}")));
        }
        let action = Arc::new(GroupAction::new(group, self.action.base_labels, self.action.table)?);
        let axioms = action.validate();
        if !axioms.is_ok() {
            return Err(Error::Structural(format!("action table is not an action: {axioms}")));
        }
        let input = Arc::new(bundle_from_spec(&action, &self.bundles.input, "E")?);
        let output = match &self.bundles.output {
            Some(spec) => Arc::new(bundle_from_spec(&action, spec, "F")?),
            None => input.clone(),
        };
        let (mu, nu, mubar, psi) = match self.families {
            FamiliesSpec::Counting { scale } => {
                let mu = GroupMeasureFamily::counting(action.clone(), scale)?;
                let nu = StabilizerMeasureFamily::counting(action.clone(), scale)?;
                let mubar = solve_orbit_family(&mu, &nu)?;
                (mu, nu, mubar, None)
            }
            FamiliesSpec::NormalizedPsi { psi, lambda } => {
                let mut psi = PsiFunction::new(action.clone(), psi)?;
                if let Some(l) = lambda {
                    psi = psi.with_lambda(l)?;
                }
                let fam = construct_normalized_families(&psi)?;
                (fam.mu, fam.nu, fam.mubar, Some(psi))
            }
            FamiliesSpec::Explicit { mu, nu, mubar } => {
                let mu = GroupMeasureFamily::new(action.clone(), mu)?;
                let nu = StabilizerMeasureFamily::new(action.clone(), nu)?;
                let mubar = match mubar {
                    Some(rows) => OrbitMeasureFamily::new(action.clone(), rows)?,
                    None => solve_orbit_family(&mu, &nu)?,
                };
                (mu, nu, mubar, None)
            }
        };
        let filter = self.filter.as_ref().map(|f| filter_from_spec(&input, &output, f)).transpose()?;
        let kernel = self.kernel.as_ref().map(|k| kernel_from_spec(&input, &output, k)).transpose()?;
        let mut thetas = BTreeMap::new();
        if let Some(t) = &self.theta {
            thetas.insert("theta".to_string(), theta_from_spec(&action, t)?);
        }
        for (name, t) in &self.thetas {
            if thetas.insert(name.clone(), theta_from_spec(&action, t)?).is_some() {
                return Err(Error::Structural(format!("theta {name:?} given twice")));
            }
        }
        let delta = self.delta.map(|rows| DeltaFunction::new(action.clone(), rows)).transpose()?;
        let defaults = Tolerances::default();
        let tolerances = match &self.tolerances {
            Some(t) => Tolerances {
                constraint: t.constraint.unwrap_or(defaults.constraint),
                theorem: t.theorem.unwrap_or(defaults.theorem),
            },
            None => defaults,
        };
        for t in [tolerances.constraint, tolerances.theorem] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Domain(format!("tolerances must be finite and nonnegative, got {t}")));
            }
        }
        let flags = self.flags.unwrap_or_default();
        Ok(Scenario {
            name: self.name,
            action,
            input,
            output,
            mu,
            nu,
            mubar,
            psi,
            filter,
            kernel,
            thetas,
            delta,
            tolerances,
            flags: Flags { strictly_positive: flags.strictly_positive, haar: flags.haar, left_invariant: flags.left_invariant },
            bands: None,
            circle_width: None,
        })
    }

    /// Exports a scenario; the measure families are written explicitly.
    pub fn from_scenario(s: &Scenario) -> Self {
        let group = s.action.group();
        let same_output = Arc::ptr_eq(&s.input, &s.output) || *s.input == *s.output;
        let mut thetas: BTreeMap<String, ThetaSpec> = s.thetas.iter().map(|(k, v)| (k.clone(), theta_to_spec(v))).collect();
        let theta = thetas.remove("theta");
        ScenarioFile {
            schema: SCHEMA.to_string(),
            name: s.name.clone(),
            group: GroupSpec {
                labels: group.labels().to_vec(),
                cayley: group.cayley_table().to_vec(),
                identity: Some(group.identity()),
                inverse: Some(group.inverse_table().to_vec()),
            },
            action: ActionSpec { base_labels: s.action.base_labels().to_vec(), table: s.action.table().to_vec() },
            bundles: BundlesSpec {
                input: bundle_to_spec(&s.input),
                output: (!same_output).then(|| bundle_to_spec(&s.output)),
            },
            families: FamiliesSpec::Explicit {
                mu: s.mu.rows(),
                nu: s.nu.rows().to_vec(),
                mubar: Some(s.mubar.rows().to_vec()),
            },
            filter: s.filter.as_ref().map(filter_to_spec),
            kernel: s.kernel.as_ref().map(kernel_to_spec),
            theta,
            thetas,
            delta: s.delta.as_ref().map(|d| d.rows().to_vec()),
            tolerances: Some(TolerancesSpec { constraint: Some(s.tolerances.constraint), theorem: Some(s.tolerances.theorem) }),
            flags: Some(FlagsSpec {
                strictly_positive: s.flags.strictly_positive,
                haar: s.flags.haar,
                left_invariant: s.flags.left_invariant,
            }),
        }
    }
}

/// Loads a scenario from a builtin name such as `torus(8)` or a JSON path.
pub fn load_scenario(arg: &str) -> Result<Scenario> {
    match Builtin::parse(arg) {
        Some(builtin) => builtin?.build(),
        None => read_scenario_file(Path::new(arg)),
    }
}

pub fn read_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    ScenarioFile::from_json(&text)?.into_scenario()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionFile {
    pub values: Vec<Vec<f64>>,
}

impl SectionFile {
    pub fn from_section(f: &Section) -> Self {
        SectionFile { values: f.values() }
    }

    pub fn into_section(self, bundle: Arc<EquivariantBundle>) -> Result<Section> {
        Section::new(bundle, self.values)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MackeyFile {
    /// `values[h][b]`.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl MackeyFile {
    pub fn from_mackey(m: &MackeySection) -> Self {
        MackeyFile { values: m.values() }
    }
}

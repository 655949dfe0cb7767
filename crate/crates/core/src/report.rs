//! Validation reports and the machine-readable check report.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Coordinates of an offending table entry, keyed by role (`g`, `h`, `b`, `c`, ...).
pub type Witness = BTreeMap<String, usize>;

/// Worst offenders kept per report.
pub const MAX_OFFENDERS: usize = 8;

pub fn witness(coords: &[(&str, usize)]) -> Witness {
    coords.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub deviation: f64,
    pub witness: Witness,
}

/// Outcome of scanning one axiom or constraint over its whole domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub check: String,
    pub max_violation: f64,
    pub tolerance: f64,
    /// Number of scanned entries whose deviation exceeds the tolerance.
    pub violation_count: usize,
    /// Worst entries first.
    pub offenders: Vec<Offender>,
}

impl ValidationReport {
    pub fn new(check: impl Into<String>, tolerance: f64) -> Self {
        ValidationReport {
            check: check.into(),
            max_violation: 0.0,
            tolerance,
            violation_count: 0,
            offenders: Vec::new(),
        }
    }

    /// Records one scanned entry. The witness closure only runs when the entry
    /// is bad enough to be kept.
    pub fn record(&mut self, deviation: f64, witness: impl FnOnce() -> Witness) {
        // NaN counts as an unbounded violation.
        let deviation = if deviation.is_nan() { f64::INFINITY } else { deviation.abs() };
        if deviation > self.tolerance {
            self.violation_count += 1;
        }
        if deviation > self.max_violation {
            self.max_violation = deviation;
        }
        if deviation == 0.0 {
            return;
        }
        let keep = self.offenders.len() < MAX_OFFENDERS
            || self.offenders.last().is_some_and(|o| deviation > o.deviation);
        if keep {
            let pos = self.offenders.partition_point(|o| o.deviation >= deviation);
            self.offenders.insert(pos, Offender { deviation, witness: witness() });
            self.offenders.truncate(MAX_OFFENDERS);
        }
    }

    pub fn is_ok(&self) -> bool {
        self.max_violation <= self.tolerance
    }

    pub fn worst(&self) -> Option<&Offender> {
        self.offenders.first()
    }

    /// Folds another scan of the same check into this one.
    pub fn absorb(&mut self, other: ValidationReport) {
        self.violation_count += other.violation_count;
        self.max_violation = self.max_violation.max(other.max_violation);
        for o in other.offenders {
            let pos = self.offenders.partition_point(|x| x.deviation >= o.deviation);
            self.offenders.insert(pos, o);
        }
        self.offenders.truncate(MAX_OFFENDERS);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.is_ok() { "ok" } else { "FAIL" };
        write!(f, "{status:<4} {} max={:.3e} tol={:.1e}", self.check, self.max_violation, self.tolerance)?;
        if let Some(worst) = self.worst().filter(|_| !self.is_ok()) {
            write!(f, " worst at")?;
            for (k, v) in &worst.witness {
                write!(f, " {k}={v}")?;
            }
        }
        Ok(())
    }
}

impl Default for ValidationReport {
    fn default() -> Self {
        ValidationReport::new("", 0.0)
    }
}

/// One line of a check report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub witness: Option<Witness>,
}

impl From<&ValidationReport> for CheckResult {
    fn from(r: &ValidationReport) -> Self {
        CheckResult {
            name: r.check.clone(),
            residual: r.max_violation,
            tolerance: r.tolerance,
            pass: r.is_ok(),
            witness: if r.is_ok() { None } else { r.worst().map(|o| o.witness.clone()) },
        }
    }
}

impl CheckResult {
    pub fn bound(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        CheckResult { name: name.into(), residual, tolerance, pass: residual <= tolerance, witness: None }
    }

    /// A check that has to exceed a threshold, as in a falsification search.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckResult { name: name.into(), residual: value, tolerance: threshold, pass: value > threshold, witness: None }
    }

    pub fn failed(name: impl Into<String>, message: &str) -> Self {
        let mut w = Witness::new();
        w.insert(format!("error: {message}"), 0);
        CheckResult { name: name.into(), residual: f64::INFINITY, tolerance: 0.0, pass: false, witness: Some(w) }
    }
}

/// Informational value that carries no pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoEntry {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub info: Vec<InfoEntry>,
}

impl Report {
    pub fn new(scenario: impl Into<String>, seed: u64) -> Self {
        Report { scenario: scenario.into(), seed, checks: Vec::new(), info: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn push_report(&mut self, report: &ValidationReport) {
        self.checks.push(report.into());
    }

    pub fn info(&mut self, name: impl Into<String>, value: f64) {
        self.info.push(InfoEntry { name: name.into(), value });
    }

    /// Sorts checks by name so assembly order never leaks into the output.
    pub fn finalize(&mut self) {
        self.checks.sort_by(|a, b| a.name.cmp(&b.name));
        self.info.sort_by(|a, b| a.name.cmp(&b.name));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.pass { "pass" } else { "FAIL" };
            out.push_str(&format!("{status}  {:<48} residual={:.3e} tol={:.1e}\n", c.name, c.residual, c.tolerance));
        }
        for i in &self.info {
            out.push_str(&format!("info  {:<48} value={:.3e}\n", i.name, i.value));
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        out.push_str(&format!("{}: {} checks, {} failed\n", self.scenario, self.checks.len(), failed));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_worst_offenders_sorted() {
        let mut r = ValidationReport::new("t", 0.5);
        for i in 0..20 {
            r.record(i as f64 / 10.0, || witness(&[("i", i)]));
        }
        assert_eq!(r.offenders.len(), MAX_OFFENDERS);
        assert_eq!(r.worst().unwrap().witness["i"], 19);
        assert_eq!(r.violation_count, 14);
        assert!(!r.is_ok());
        assert!((r.max_violation - 1.9).abs() < 1e-15);
    }

    #[test]
    fn nan_is_a_violation() {
        let mut r = ValidationReport::new("t", 1.0);
        r.record(f64::NAN, Witness::new);
        assert!(!r.is_ok());
    }
}

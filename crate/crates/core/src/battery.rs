//! Validators and the randomized property battery for a scenario.

use std::f64::consts::PI;
use std::sync::Once;

use rayon::prelude::*;

use crate::bundle::{act_on_mackey, act_on_section, section_to_mackey, validate_mackey, Section};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::measures::{
    check_fubini, check_fubini_with_reps, construct_normalized_families, fubini_defect, psi_normalization,
    validate_families, PsiFunction,
};
use crate::quadrature::LineGrid;
use crate::report::{witness, CheckResult, Report, ValidationReport};
use crate::rng::SeededRng;
use crate::scenario::Scenario;
use crate::transform::{
    check_equivariance, integral_transform, lift_kernel_to_filter, project_filter_to_kernel, random_valid_kernel,
    validate_kernel, validate_kernel_support, validate_theta, Kernel,
};
use crate::xcorr::{
    check_convolution_form, compress_filter, cross_correlate, evaluate_at_identity, expand_filter,
    random_valid_filter, validate_filter, ConvolutionCheck, Filter,
};

/// Groups up to this order are checked against every element.
pub const EXHAUSTIVE_GROUP_ORDER: usize = 64;
const SAMPLED_ELEMENTS: usize = 8;
const FALSIFICATION_EPS: f64 = 0.1;
const FALSIFICATION_FLOOR: f64 = 1e-9;
/// Rotation used for the off-grid circle defect.
pub const OFF_GRID_ANGLE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryConfig {
    pub seed: u64,
    pub filters: usize,
    pub sections: usize,
    pub fubini_samples: usize,
    pub falsifications: usize,
    /// Replaces the scenario's constraint tolerance.
    pub tolerance: Option<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig { seed: 0, filters: 20, sections: 20, fubini_samples: 100, falsifications: 10, tolerance: None }
    }
}

/// Caps the global thread pool at `EQUICORR_THREADS` when set.
pub fn configure_threads() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        if let Some(n) = std::env::var("EQUICORR_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            // A pool that already exists keeps its size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    });
}

fn tagged(mut report: ValidationReport, tag: &str) -> ValidationReport {
    report.check = format!("{}[{tag}]", report.check);
    report
}

fn flag_check(report: &mut Report, name: &str, declared: Option<bool>, actual: bool) {
    if let Some(d) = declared {
        let mut c = CheckResult::bound(name, if d == actual { 0.0 } else { 1.0 }, 0.0);
        if d != actual {
            c.witness = Some(witness(&[("declared", d as usize), ("actual", actual as usize)]));
        }
        report.push(c);
    }
}

/// Every deterministic validator that applies to the scenario.
pub fn validate_scenario(s: &Scenario, tolerance: Option<f64>) -> Report {
    let tol = tolerance.unwrap_or(s.tolerances.constraint);
    let mut report = Report::new(&s.name, 0);
    report.push_report(&s.action.group().validate());
    report.push_report(&s.action.validate());
    report.push_report(&tagged(s.input.validate(tol), "E"));
    if *s.input != *s.output {
        report.push_report(&tagged(s.output.validate(tol), "F"));
    }
    match validate_families(&s.mu, &s.nu, &s.mubar, tol) {
        Ok(v) => v.reports().iter().for_each(|r| report.push_report(r)),
        Err(e) => report.push(CheckResult::failed("measure_families", &e.to_string())),
    }
    report.push_report(&fubini_defect(&s.mu, &s.nu, &s.mubar, tol));
    if let Some(psi) = &s.psi {
        report.push_report(&psi.validate(tol));
        report.push_report(&psi_normalization(psi, &s.mu, &s.nu, tol));
    }
    flag_check(&mut report, "flag_strictly_positive", s.flags.strictly_positive, s.mubar.is_strictly_positive());
    flag_check(&mut report, "flag_haar", s.flags.haar, s.mu.is_haar());
    flag_check(
        &mut report,
        "flag_left_invariant",
        s.flags.left_invariant,
        s.mu.is_left_invariant() && s.nu.validate_left_invariance(0.0).is_ok(),
    );
    if let Some(w) = &s.filter {
        report.push_report(&validate_filter(w, tol));
    }
    if let Some(k) = &s.kernel {
        report.push_report(&validate_kernel(k, tol));
        report.push_report(&validate_kernel_support(k));
        for (name, theta) in &s.thetas {
            match validate_theta(theta, k) {
                Ok(v) => {
                    report.push_report(&tagged(v.lift, name));
                    report.push_report(&tagged(v.equivariance, name));
                }
                Err(e) => report.push(CheckResult::failed(format!("theta_coverage[{name}]"), &e.to_string())),
            }
        }
    }
    if let Some(d) = &s.delta {
        report.push_report(&d.validate_normalization(&s.nu, tol));
        report.push_report(&d.validate_conjugation(tol));
    }
    report.finalize();
    report
}

/// Elements to test against: all of them for small groups, else a seeded sample.
fn test_elements(order: usize, rng: &mut SeededRng) -> Vec<usize> {
    if order <= EXHAUSTIVE_GROUP_ORDER {
        (0..order).collect()
    } else {
        let mut v: Vec<usize> = (0..SAMPLED_ELEMENTS).map(|_| rng.index(order)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Default)]
struct FilterTrial {
    equivariance: ValidationReport,
    mackey: ValidationReport,
    convolution: Option<f64>,
    codec: f64,
    projection: ValidationReport,
    projected_kernel: ValidationReport,
}

fn filter_trial(s: &Scenario, cfg: &BatteryConfig, index: usize, sections: usize) -> Result<FilterTrial> {
    let theorem = s.tolerances.theorem;
    let mut rng = SeededRng::derive(cfg.seed, &format!("battery/filter/{index}"));
    let omega = random_valid_filter(s.input.clone(), s.output.clone(), &mut rng)?;
    let elements = test_elements(s.action.group().order(), &mut rng);
    let mut t = FilterTrial {
        equivariance: ValidationReport::new("xcorr_equivariance", theorem),
        mackey: ValidationReport::new("mackey_preservation", theorem),
        projection: ValidationReport::new("projection_correctness", theorem),
        projected_kernel: ValidationReport::new("projected_kernel_constraint", theorem),
        ..FilterTrial::default()
    };
    let kappa = project_filter_to_kernel(&omega, &s.nu)?;
    let kc = validate_kernel(&kappa, theorem);
    t.projected_kernel.record(kc.max_violation, || witness(&[("filter", index)]));
    t.codec = expand_filter(&compress_filter(&omega), s.tolerances.constraint)?.max_abs_diff(&omega);
    for j in 0..sections {
        let f = Section::random(s.input.clone(), &mut rng);
        let m = section_to_mackey(&f);
        let out = cross_correlate(&omega, &m, &s.mu)?;
        let p = validate_mackey(&out, theorem);
        t.mackey.record(p.max_violation, || witness(&[("filter", index), ("section", j)]));
        for &g in &elements {
            let moved = cross_correlate(&omega, &act_on_mackey(g, &m), &s.mu)?;
            let dev = moved.max_abs_diff(&act_on_mackey(g, &out));
            t.equivariance.record(dev, || witness(&[("filter", index), ("section", j), ("g", g)]));
        }
        let lhs = integral_transform(&kappa, &s.mubar, &f)?;
        let rhs = evaluate_at_identity(&omega, &m, &s.mu)?;
        let (dev, b) = lhs.worst_point(&rhs);
        t.projection.record(dev, || witness(&[("filter", index), ("section", j), ("b", b)]));
        if j == 0 {
            if let ConvolutionCheck::Residual(r) = check_convolution_form(&omega, &m, &s.mu)? {
                t.convolution = Some(r);
            }
        }
    }
    Ok(t)
}

/// Searches for an equivariance violation of the section map `f -> (omega * f~)(e, .)`
/// for a filter that breaks the constraint; returns the largest residual found.
fn falsify_filter(s: &Scenario, omega: &Filter, rng: &mut SeededRng, focus: usize) -> Result<f64> {
    let mut elements = vec![focus];
    elements.extend(test_elements(s.action.group().order(), rng));
    let mut best: f64 = 0.0;
    for _ in 0..4 {
        let f = Section::random(s.input.clone(), rng);
        let out = evaluate_at_identity(omega, &section_to_mackey(&f), &s.mu)?;
        for &g in &elements {
            let moved = evaluate_at_identity(omega, &section_to_mackey(&act_on_section(g, &f)), &s.mu)?;
            best = best.max(moved.max_abs_diff(&act_on_section(g, &out)));
            if best > FALSIFICATION_FLOOR {
                return Ok(best);
            }
        }
    }
    Ok(best)
}

/// Breaks one entry of a valid kernel by `FALSIFICATION_EPS`.
pub fn perturbed_kernel(kappa: &Kernel, rng: &mut SeededRng) -> Result<Kernel> {
    let action = kappa.domain().action();
    let nb = action.base_size();
    let b = rng.index(nb);
    let orbit = action.orbit_members(b);
    let c = orbit[rng.index(orbit.len())];
    let (rows, cols) = (kappa.codomain().fiber_dim(b), kappa.domain().fiber_dim(c));
    let mut m = kappa.get(c, b).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols));
    if rows * cols == 0 {
        return Ok(kappa.clone());
    }
    let (i, j) = (rng.index(rows), rng.index(cols));
    m.set(i, j, m.get(i, j) + FALSIFICATION_EPS);
    kappa.with_entry(c, b, m)
}

fn push_bound(report: &mut Report, r: ValidationReport) {
    report.push_report(&r);
}

/// Fubini checks for one triple of families.
fn fubini_checks(
    report: &mut Report,
    s: &Scenario,
    fam: (&crate::measures::GroupMeasureFamily, &crate::measures::StabilizerMeasureFamily, &crate::measures::OrbitMeasureFamily),
    tag: &str,
    cfg: &BatteryConfig,
) -> Result<()> {
    let (mu, nu, mubar) = fam;
    let theorem = s.tolerances.theorem;
    let group = s.action.group();
    let mut rng = SeededRng::derive(cfg.seed, &format!("battery/fubini/{tag}"));
    let mut random = ValidationReport::new(format!("fubini_random[{tag}]"), theorem);
    let mut reps = ValidationReport::new(format!("fubini_rep_independence[{tag}]"), theorem);
    for i in 0..cfg.fubini_samples {
        let f = rng.vec(group.order());
        for b in 0..s.action.base_size() {
            let r = check_fubini(mu, nu, mubar, &f, b)?;
            random.record(r, || witness(&[("sample", i), ("b", b)]));
            let stab = s.action.stabilizer_of(b);
            let section = s.action.coset_section(b)?.reseat(group, |_| stab[rng.index(stab.len())]);
            let moved = check_fubini_with_reps(mu, nu, mubar, &f, &section)?;
            reps.record(moved - r, || witness(&[("sample", i), ("b", b)]));
        }
    }
    report.push_report(&random);
    report.push_report(&reps);
    Ok(())
}

fn circle_checks(report: &mut Report, s: &Scenario, omega: &Filter) -> Result<()> {
    let n = s.action.base_size();
    let grid = |b: usize| 2.0 * PI * b as f64 / n as f64;
    let smooth = |x: f64| x.cos() + 0.5 * (2.0 * x).sin();
    let f = Section::from_fn(s.input.clone(), |b, _| smooth(grid(b)));
    let out = evaluate_at_identity(omega, &section_to_mackey(&f), &s.mu)?;
    let mut aligned = ValidationReport::new("circle_aligned_equivariance", s.tolerances.theorem);
    for g in 0..n {
        let moved = evaluate_at_identity(omega, &section_to_mackey(&act_on_section(g, &f)), &s.mu)?;
        let (dev, b) = moved.worst_point(&act_on_section(g, &out));
        aligned.record(dev, || witness(&[("g", g), ("b", b)]));
    }
    report.push_report(&aligned);
    let shift = (OFF_GRID_ANGLE * n as f64 / (2.0 * PI)).round() as usize % n;
    let rotated = Section::from_fn(s.input.clone(), |b, _| smooth(grid(b) - OFF_GRID_ANGLE));
    let exact = evaluate_at_identity(omega, &section_to_mackey(&rotated), &s.mu)?;
    report.info("circle_offgrid_defect", exact.max_abs_diff(&act_on_section(shift, &out)));
    Ok(())
}

/// The full property suite. Deterministic for a fixed scenario and seed.
pub fn run_battery(s: &Scenario, cfg: &BatteryConfig) -> Result<Report> {
    configure_threads();
    let theorem = s.tolerances.theorem;
    let validation = validate_scenario(s, cfg.tolerance);
    let mut report = Report::new(&s.name, cfg.seed);
    report.checks = validation.checks;
    let order = s.action.group().order();
    let small = order <= EXHAUSTIVE_GROUP_ORDER;
    let (filters, sections) = if small { (cfg.filters, cfg.sections) } else { (cfg.filters.min(3), cfg.sections.min(3)) };

    let trials: Vec<Result<FilterTrial>> = (0..filters).into_par_iter().map(|i| filter_trial(s, cfg, i, sections)).collect();
    let mut equivariance = ValidationReport::new("xcorr_equivariance", theorem);
    let mut mackey = ValidationReport::new("mackey_preservation", theorem);
    let mut projection = ValidationReport::new("projection_correctness", theorem);
    let mut projected = ValidationReport::new("projected_kernel_constraint", theorem);
    let mut convolution = ValidationReport::new("convolution_form", theorem);
    let mut codec = ValidationReport::new("codec_round_trip", theorem);
    let mut skipped = false;
    for (i, t) in trials.into_iter().enumerate() {
        let t = t?;
        equivariance.absorb(t.equivariance);
        mackey.absorb(t.mackey);
        projection.absorb(t.projection);
        projected.absorb(t.projected_kernel);
        match t.convolution {
            Some(r) => convolution.record(r, || witness(&[("filter", i)])),
            None => skipped = true,
        }
        codec.record(t.codec, || witness(&[("filter", i)]));
    }
    for r in [equivariance, mackey, projection, projected, codec] {
        push_bound(&mut report, r);
    }
    if skipped {
        report.info("convolution_form_skipped", 1.0);
    } else {
        report.push_report(&convolution);
    }

    fubini_checks(&mut report, s, (&s.mu, &s.nu, &s.mubar), "scenario", cfg)?;
    let fam = construct_normalized_families(&PsiFunction::identity_indicator(s.action.clone()))?;
    match validate_families(&fam.mu, &fam.nu, &fam.mubar, 0.0) {
        Ok(v) => v.reports().iter().for_each(|r| report.push_report(&tagged((*r).clone(), "psi0"))),
        Err(e) => report.push(CheckResult::failed("measure_families[psi0]", &e.to_string())),
    }
    let psi0 = PsiFunction::identity_indicator(s.action.clone());
    report.push_report(&tagged(psi_normalization(&psi0, &fam.mu, &fam.nu, theorem), "psi0"));
    fubini_checks(&mut report, s, (&fam.mu, &fam.nu, &fam.mubar), "psi0", cfg)?;

    if let Some(kappa) = &s.kernel {
        kernel_checks(&mut report, s, kappa, cfg)?;
    }
    if s.mubar.is_strictly_positive() && cfg.falsifications > 0 {
        falsification_checks(&mut report, s, cfg)?;
    }
    if let (Some(_), Some(w)) = (s.circle_width, &s.filter) {
        circle_checks(&mut report, s, w)?;
    }
    report.finalize();
    Ok(report)
}

fn kernel_checks(report: &mut Report, s: &Scenario, kappa: &Kernel, cfg: &BatteryConfig) -> Result<()> {
    let theorem = s.tolerances.theorem;
    let mut rng = SeededRng::derive(cfg.seed, "battery/kernel");
    let eq = check_equivariance(kappa, &s.mubar, &mut rng, cfg.sections.min(20))?;
    report.push_report(&eq);
    let delta = s.delta_or_dirac()?;
    let fubini = fubini_defect(&s.mu, &s.nu, &s.mubar, theorem);
    let sections: Vec<Section> = (0..cfg.sections).map(|_| Section::random(s.input.clone(), &mut rng)).collect();
    let transforms: Vec<Section> =
        sections.iter().map(|f| integral_transform(kappa, &s.mubar, f)).collect::<Result<_>>()?;
    let mut lifted_outputs: Vec<(String, Vec<Section>, Filter)> = Vec::new();
    for (name, theta) in &s.thetas {
        if validate_theta(theta, kappa).map(|v| !v.is_ok()).unwrap_or(true) {
            report.push(CheckResult::failed(format!("lift_equivalence[{name}]"), "theta is not valid for the kernel"));
            continue;
        }
        let omega = lift_kernel_to_filter(kappa, theta, &delta)?;
        report.push_report(&tagged(validate_filter(&omega, theorem), &format!("lift/{name}")));
        if !fubini.is_ok() {
            report.push(CheckResult::failed(format!("lift_equivalence[{name}]"), "measure families fail the decomposition identity"));
        } else {
            let mut eqv = ValidationReport::new(format!("lift_equivalence[{name}]"), theorem);
            let mut outs = Vec::with_capacity(sections.len());
            for (j, (f, tf)) in sections.iter().zip(&transforms).enumerate() {
                let out = evaluate_at_identity(&omega, &section_to_mackey(f), &s.mu)?;
                let (dev, b) = out.worst_point(tf);
                eqv.record(dev, || witness(&[("section", j), ("b", b)]));
                outs.push(out);
            }
            report.push_report(&eqv);
            lifted_outputs.push((name.clone(), outs, omega.clone()));
        }
        let back = project_filter_to_kernel(&omega, &s.nu)?;
        report.push(CheckResult::bound(format!("project_lift_round_trip[{name}]"), back.max_abs_diff(kappa), theorem));
        let mut support = ValidationReport::new(format!("lift_support[{name}]"), 0.0);
        for b in 0..s.action.base_size() {
            for h in omega.support(b) {
                let outside = kappa.get(s.action.act(h, b), b).is_none();
                support.record(if outside { 1.0 } else { 0.0 }, || witness(&[("h", h), ("b", b)]));
            }
        }
        report.push_report(&support);
        if let Some(w) = &s.filter {
            if theta_covers(theta, &project_filter_to_kernel(w, &s.nu)?) {
                let relifted = lift_kernel_to_filter(&project_filter_to_kernel(w, &s.nu)?, theta, &delta)?;
                let gap = relifted.max_abs_diff(w);
                report.info(format!("lift_of_projection_gap[{name}]"), gap);
            }
        }
    }
    if lifted_outputs.len() >= 2 {
        let (first, rest) = lifted_outputs.split_first().expect("at least two lifts");
        for (name, outs, omega) in rest {
            let agree = first.1.iter().zip(outs).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
            report.push(CheckResult::bound(format!("lift_agreement[{}~{name}]", first.0), agree, theorem));
            let differing = (0..s.action.base_size())
                .filter(|&b| first.2.support(b).collect::<Vec<_>>() != omega.support(b).collect::<Vec<_>>())
                .count();
            report.info(format!("lift_support_rows_differing[{}~{name}]", first.0), differing as f64);
        }
    }
    Ok(())
}

fn theta_covers(theta: &crate::transform::ThetaMap, kappa: &Kernel) -> bool {
    validate_theta(theta, kappa).map(|v| v.is_ok()).unwrap_or(false)
}

fn falsification_checks(report: &mut Report, s: &Scenario, cfg: &BatteryConfig) -> Result<()> {
    let results: Vec<Result<(f64, f64)>> = (0..cfg.falsifications)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededRng::derive(cfg.seed, &format!("battery/falsify/{i}"));
            let omega = random_valid_filter(s.input.clone(), s.output.clone(), &mut rng)?;
            let nb = s.action.base_size();
            let b = rng.index(nb);
            let h = rng.index(s.action.group().order());
            let mut m = omega.matrix_or_zero(h, b);
            let filter_found = if m.rows() * m.cols() == 0 {
                f64::INFINITY
            } else {
                let (r, c) = (rng.index(m.rows()), rng.index(m.cols()));
                m.set(r, c, m.get(r, c) + FALSIFICATION_EPS);
                let broken = omega.with_entry(h, b, m)?;
                let focus = validate_filter(&broken, 0.0).worst().map(|o| o.witness["g"]).unwrap_or(0);
                falsify_filter(s, &broken, &mut rng, focus)?
            };
            let kappa = random_valid_kernel(s.input.clone(), s.output.clone(), &mut rng, |_, _| true)?;
            let broken = perturbed_kernel(&kappa, &mut rng)?;
            let kernel_found = check_equivariance(&broken, &s.mubar, &mut rng, 4)?.max_violation;
            Ok((filter_found, kernel_found))
        })
        .collect();
    let (mut worst_filter, mut worst_kernel) = (f64::INFINITY, f64::INFINITY);
    for r in results {
        let (f, k) = r?;
        worst_filter = worst_filter.min(f);
        worst_kernel = worst_kernel.min(k);
    }
    report.push(CheckResult::at_least("filter_falsification", worst_filter, FALSIFICATION_FLOOR));
    report.push(CheckResult::at_least("kernel_falsification", worst_kernel, FALSIFICATION_FLOOR));
    Ok(())
}

/// The quadrature battery: residual ratios along three halvings.
pub fn run_line_grid_battery(grid: &LineGrid, seed: u64) -> Report {
    let mut report = Report::new(format!("line-grid({},{})", grid.truncation, grid.spacing), seed);
    let ladder = grid.ladder(3);
    for (k, w) in ladder.windows(2).enumerate() {
        let ratio = w[0].1 / w[1].1;
        let mut c = CheckResult::bound(format!("line_grid_refinement_ratio[{k}]"), (ratio - 2.0).abs(), 0.6);
        c.witness = None;
        report.push(c);
        report.info(format!("line_grid_ratio[{k}]"), ratio);
    }
    for (k, (dx, r)) in ladder.iter().enumerate() {
        report.info(format!("line_grid_residual[{k}]"), *r);
        report.info(format!("line_grid_spacing[{k}]"), *dx);
    }
    let monotone = ladder.windows(2).all(|w| w[1].1 < w[0].1);
    report.push(CheckResult::bound("line_grid_monotone", if monotone { 0.0 } else { 1.0 }, 0.0));
    let jumps: Vec<f64> = (0..=3)
        .map(|k| LineGrid { truncation: grid.truncation, spacing: grid.spacing / f64::powi(2.0, k) }.neighbour_jump())
        .collect();
    report.info("line_grid_neighbour_jump_finest", *jumps.last().expect("nonempty ladder"));
    report.push(CheckResult::bound(
        "line_grid_continuity",
        if jumps.windows(2).all(|w| w[1] <= w[0] * 1.3) { 0.0 } else { 1.0 },
        0.0,
    ));
    report.finalize();
    report
}

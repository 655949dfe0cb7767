//! Acceptance battery. Runs every criterion, prints one verdict line per
//! criterion and exits nonzero if any of them fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use equicorr::battery::perturbed_kernel;
use equicorr::bundle::{act_on_mackey, act_on_section, section_to_mackey, validate_mackey, Section};
use equicorr::demo::degeneracy_demo;
use equicorr::measures::{
    check_fubini, check_fubini_with_reps, construct_normalized_families, fubini_defect, psi_normalization,
    validate_families, PsiFunction,
};
use equicorr::quadrature::LineGrid;
use equicorr::rng::SeededRng;
use equicorr::scenario::{build_theta, default_builtins, Builtin, Scenario};
use equicorr::transform::{
    check_equivariance, dirac_delta, integral_transform, lift_kernel_to_filter, project_filter_to_kernel,
    random_valid_kernel, validate_kernel,
};
use equicorr::xcorr::{cross_correlate, evaluate_at_identity, random_valid_filter};
use equicorr::Result;

const THEOREM: f64 = 1e-12;
const SEED: u64 = 0x5eed;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn build(b: Builtin) -> Result<Scenario> {
    b.build()
}

fn xcorr_battery() -> Result<(f64, f64, f64)> {
    let start = Instant::now();
    let (mut equiv, mut mackey): (f64, f64) = (0.0, 0.0);
    for b in [Builtin::Cyclic(8), Builtin::Dihedral { n: 4, sign: false }, Builtin::Torus(8)] {
        let s = build(b)?;
        let mut rng = SeededRng::derive(SEED, &format!("acceptance/xcorr/{}", s.name));
        let order = s.action.group().order();
        for _ in 0..20 {
            let omega = random_valid_filter(s.input.clone(), s.output.clone(), &mut rng)?;
            for _ in 0..20 {
                let m = section_to_mackey(&Section::random(s.input.clone(), &mut rng));
                let out = cross_correlate(&omega, &m, &s.mu)?;
                mackey = mackey.max(validate_mackey(&out, THEOREM).max_violation);
                for g in 0..order {
                    let moved = cross_correlate(&omega, &act_on_mackey(g, &m), &s.mu)?;
                    equiv = equiv.max(moved.max_abs_diff(&act_on_mackey(g, &out)));
                }
            }
        }
    }
    Ok((equiv, mackey, start.elapsed().as_secs_f64()))
}

fn lift_correctness() -> Result<Verdict> {
    let s = build(Builtin::TorusBands { n: 16, spacing: 5, eps: 1 })?;
    let fam = construct_normalized_families(&PsiFunction::identity_indicator(s.action.clone()))?;
    let kappa = s.kernel.as_ref().expect("band kernel");
    let delta = dirac_delta(&fam.nu)?;
    let mut rng = SeededRng::derive(SEED, "acceptance/lift");
    let sections: Vec<Section> = (0..20).map(|_| Section::random(s.input.clone(), &mut rng)).collect();
    let mut worst = [0.0f64; 2];
    let mut outputs = Vec::new();
    for (slot, name) in ["global", "special"].into_iter().enumerate() {
        let omega = lift_kernel_to_filter(kappa, &s.thetas[name], &delta)?;
        let mut outs = Vec::new();
        for f in &sections {
            let lhs = evaluate_at_identity(&omega, &section_to_mackey(f), &fam.mu)?;
            let rhs = common::transform(kappa, &fam.mubar, f);
            worst[slot] = worst[slot].max(common::vec_gap(&lhs.values(), &rhs));
            worst[slot] = worst[slot].max(common::vec_gap(&common::xcorr_at_identity(&omega, &fam.mu, f), &rhs));
            outs.push(lhs);
        }
        outputs.push(outs);
    }
    let agree = outputs[0].iter().zip(&outputs[1]).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    let pass = worst[0] <= THEOREM && worst[1] <= THEOREM && agree <= THEOREM;
    Ok(verdict(pass, format!("global {:.2e}, special {:.2e}, agreement {agree:.2e}", worst[0], worst[1])))
}

fn projection_correctness() -> Result<Verdict> {
    let s = build(Builtin::Dihedral { n: 4, sign: false })?;
    let fubini = fubini_defect(&s.mu, &s.nu, &s.mubar, THEOREM).max_violation;
    let mut rng = SeededRng::derive(SEED, "acceptance/projection");
    let (mut worst, mut oracle): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let omega = random_valid_filter(s.input.clone(), s.output.clone(), &mut rng)?;
        let kappa = project_filter_to_kernel(&omega, &s.nu)?;
        oracle = oracle.max(common::dense_gap(&common::dense_kernel(&kappa), &common::project(&omega, &s.nu)));
        for _ in 0..20 {
            let f = Section::random(s.input.clone(), &mut rng);
            let lhs = integral_transform(&kappa, &s.mubar, &f)?;
            let rhs = evaluate_at_identity(&omega, &section_to_mackey(&f), &s.mu)?;
            worst = worst.max(lhs.max_abs_diff(&rhs));
            worst = worst.max(common::vec_gap(&common::transform(&kappa, &s.mubar, &f), &common::xcorr_at_identity(&omega, &s.mu, &f)));
        }
    }
    let pass = worst <= THEOREM && fubini <= THEOREM && oracle <= THEOREM;
    Ok(verdict(pass, format!("residual {worst:.2e}, decomposition {fubini:.2e}, vs oracle {oracle:.2e}")))
}

fn round_trip() -> Result<Verdict> {
    let mut detail = Vec::new();
    let mut pass = true;
    let bands = build(Builtin::TorusBands { n: 16, spacing: 5, eps: 1 })?;
    let dihedral = build(Builtin::Dihedral { n: 4, sign: false })?;
    let dihedral_sign = build(Builtin::Dihedral { n: 4, sign: true })?;
    for s in [&bands, &dihedral, &dihedral_sign] {
        let delta = dirac_delta(&s.nu)?;
        let mut rng = SeededRng::derive(SEED, &format!("acceptance/round-trip/{}", s.name));
        let mut kernels = vec![s.kernel.clone().expect("builtin kernel")];
        for _ in 0..5 {
            kernels.push(random_valid_kernel(s.input.clone(), s.output.clone(), &mut rng, |_, _| true)?);
        }
        let (mut lib, mut oracle, mut lift_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for (i, kappa) in kernels.iter().enumerate() {
            let thetas: Vec<_> = if i == 0 && !s.thetas.is_empty() {
                s.thetas.values().cloned().collect()
            } else {
                vec![build_theta(kappa)?]
            };
            for theta in &thetas {
                let omega = lift_kernel_to_filter(kappa, theta, &delta)?;
                lib = lib.max(project_filter_to_kernel(&omega, &s.nu)?.max_abs_diff(kappa));
                let brute = common::lift(kappa, theta, &delta);
                lift_gap = lift_gap.max(common::dense_gap(&common::dense_filter(&omega), &brute));
                let back = common::project(&omega, &s.nu);
                oracle = oracle.max(common::dense_gap(&back, &common::dense_kernel(kappa)));
            }
        }
        pass &= lib <= THEOREM && oracle <= THEOREM && lift_gap <= THEOREM;
        detail.push(format!("{} {lib:.1e}/{oracle:.1e}/{lift_gap:.1e}", s.name));
    }
    Ok(verdict(pass, format!("library/oracle/lift-vs-oracle: {}", detail.join(", "))))
}

fn fubini() -> Result<Verdict> {
    let (mut worst, mut reps, mut oracle): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for b in default_builtins() {
        let s = b.build()?;
        let fam = construct_normalized_families(&PsiFunction::identity_indicator(s.action.clone()))?;
        let group = s.action.group();
        let mut rng = SeededRng::derive(SEED, &format!("acceptance/fubini/{}", s.name));
        for _ in 0..100 {
            let f = rng.vec(group.order());
            for x in 0..s.action.base_size() {
                let r = check_fubini(&fam.mu, &fam.nu, &fam.mubar, &f, x)?;
                worst = worst.max(r);
                let stab = s.action.stabilizer_of(x).to_vec();
                let shifts: Vec<usize> = (0..s.action.base_size()).map(|_| stab[rng.index(stab.len())]).collect();
                let section = s.action.coset_section(x)?.reseat(group, |c| shifts[c]);
                reps = reps.max((check_fubini_with_reps(&fam.mu, &fam.nu, &fam.mubar, &f, &section)? - r).abs());
                let (lhs, rhs) = common::fubini_sides(&fam.mu, &fam.nu, &fam.mubar, &f, x, |c| {
                    group.mul(common::last_rep(&s.action, x, c).expect("orbit point"), shifts[c])
                });
                oracle = oracle.max((lhs - rhs).abs());
            }
        }
    }
    let pass = worst <= THEOREM && reps <= THEOREM && oracle <= THEOREM;
    Ok(verdict(pass, format!("residual {worst:.2e}, rep change {reps:.2e}, oracle {oracle:.2e}")))
}

fn support_shapes() -> Result<Verdict> {
    let s = build(Builtin::TorusBands { n: 16, spacing: 5, eps: 1 })?;
    let geo = s.bands.expect("band geometry");
    let kappa = s.kernel.as_ref().expect("band kernel");
    let delta = dirac_delta(&s.nu)?;
    let eps = geo.eps as i64;
    let sp = geo.spacing as i64;
    let rectangle: BTreeSet<(i64, i64)> = (-eps..=eps).flat_map(|x| (-1..=1).map(move |y| (x, y))).collect();
    let segments: BTreeSet<(i64, i64)> =
        (-1..=1).flat_map(|i| (-eps..=eps).map(move |j| (i * sp + j, 0))).collect();
    let mut pass = rectangle.len() == 9 && segments.len() == 9;
    for (name, expected) in [("special", &rectangle), ("global", &segments)] {
        let omega = lift_kernel_to_filter(kappa, &s.thetas[name], &delta)?;
        for b in 0..s.action.base_size() {
            let got: BTreeSet<(i64, i64)> =
                omega.support(b).map(|h| (geo.signed(h % geo.n), geo.signed(h / geo.n))).collect();
            pass &= &got == expected;
        }
    }
    Ok(verdict(pass, format!("rectangle {} points, three segments {} points, every base point", rectangle.len(), segments.len())))
}

fn degeneracy() -> Result<Verdict> {
    let t = degeneracy_demo(&[4, 8, 16])?;
    let ratios: Vec<String> = t.rows.iter().map(|r| format!("{:.6}", r.ratio)).collect();
    Ok(verdict(
        t.passed(),
        format!("output/N = [{}], ratio spread {:.1e}, lifted spread {:.1e}", ratios.join(", "), t.ratio_spread, t.lifted_spread),
    ))
}

fn necessity() -> Result<Verdict> {
    let scenarios = [
        Builtin::Cyclic(8),
        Builtin::Dihedral { n: 4, sign: false },
        Builtin::Dihedral { n: 4, sign: true },
        Builtin::Torus(8),
    ]
    .map(|b| b.build());
    let mut misses = 0;
    let mut weakest = f64::INFINITY;
    let mut total = 0;
    for (i, s) in scenarios.iter().enumerate() {
        let s = s.as_ref().map_err(|e| equicorr::Error::Precondition(e.to_string()))?;
        assert!(s.mubar.is_strictly_positive());
        for j in 0..25 {
            let mut rng = SeededRng::derive(SEED, &format!("acceptance/necessity/{i}/{j}"));
            let kappa = random_valid_kernel(s.input.clone(), s.output.clone(), &mut rng, |_, _| true)?;
            let broken = perturbed_kernel(&kappa, &mut rng)?;
            if validate_kernel(&broken, 0.0).max_violation < 0.1 - 1e-12 {
                return Ok(verdict(false, format!("kernel {total} does not violate the constraint by 0.1")));
            }
            let found = check_equivariance(&broken, &s.mubar, &mut rng, 4)?.max_violation;
            weakest = weakest.min(found);
            if found <= 1e-9 {
                misses += 1;
            }
            total += 1;
        }
    }
    Ok(verdict(misses == 0, format!("{total} kernels, {misses} misses, weakest witness {weakest:.2e}")))
}

fn quadrature() -> Result<Verdict> {
    let ladder = LineGrid::new(1, 0.125)?.ladder(3);
    let ratios: Vec<f64> = ladder.windows(2).map(|w| w[0].1 / w[1].1).collect();
    let mut pass = ratios.len() == 3 && ratios.iter().all(|r| (1.4..=2.6).contains(r));
    let s = build(Builtin::CircleGrid { n: 32, width: 3 })?;
    let omega = s.filter.as_ref().expect("circle filter");
    let mut rng = SeededRng::derive(SEED, "acceptance/circle");
    let mut aligned: f64 = 0.0;
    for _ in 0..5 {
        let f = Section::random(s.input.clone(), &mut rng);
        let out = evaluate_at_identity(omega, &section_to_mackey(&f), &s.mu)?;
        for g in 0..s.action.group().order() {
            let moved = evaluate_at_identity(omega, &section_to_mackey(&act_on_section(g, &f)), &s.mu)?;
            aligned = aligned.max(moved.max_abs_diff(&act_on_section(g, &out)));
        }
    }
    pass &= aligned <= THEOREM;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(verdict(pass, format!("refinement ratios [{}], grid-aligned circle residual {aligned:.2e}", shown.join(", "))))
}

fn measure_construction() -> Result<Verdict> {
    let (mut axioms, mut norm): (f64, f64) = (0.0, 0.0);
    let mut pass = true;
    for b in default_builtins() {
        let s = b.build()?;
        let psi = PsiFunction::identity_indicator(s.action.clone());
        let fam = construct_normalized_families(&psi)?;
        let v = validate_families(&fam.mu, &fam.nu, &fam.mubar, 0.0)?;
        pass &= v.is_ok();
        axioms = v.reports().iter().map(|r| r.max_violation).fold(axioms, f64::max);
        let n = psi_normalization(&psi, &fam.mu, &fam.nu, THEOREM);
        pass &= n.is_ok();
        norm = norm.max(n.max_violation);
    }
    Ok(verdict(pass, format!("axiom residual {axioms:.1e} (exact), normalization {norm:.2e}")))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, v: Result<Verdict>| {
        let v = v.unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        if !v.pass {
            failed += 1;
        }
        println!("criterion {id:>2} {}  {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };

    let battery = xcorr_battery();
    let (first, second) = match battery {
        Ok((equiv, mackey, secs)) => (
            Ok(verdict(equiv <= THEOREM && secs < 60.0, format!("max residual {equiv:.2e} over all g, {secs:.1}s"))),
            Ok(verdict(mackey <= THEOREM, format!("periodicity residual {mackey:.2e}"))),
        ),
        Err(e) => (Err(equicorr::Error::Precondition(e.to_string())), Err(e)),
    };
    report(1, "cross-correlation equivariance", first);
    report(2, "Mackey preservation", second);
    report(3, "lift correctness", lift_correctness());
    report(4, "projection correctness", projection_correctness());
    report(5, "project after lift", round_trip());
    report(6, "decomposition identity", fubini());
    report(7, "lifted support shapes", support_shapes());
    report(8, "stabilizer-size degeneracy", degeneracy());
    report(9, "necessity falsification", necessity());
    report(10, "quadrature convergence", quadrature());
    report(11, "measure construction", measure_construction());

    if failed == 0 {
        println!("acceptance: all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 11 criteria failed");
        ExitCode::FAILURE
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equicorr::battery::{configure_threads, run_battery, run_line_grid_battery, validate_scenario, BatteryConfig};
use equicorr::bundle::section_to_mackey;
use equicorr::codec::{filter_to_spec, kernel_to_spec, load_scenario, MackeyFile, ScenarioFile, SectionFile};
use equicorr::demo::degeneracy_demo;
use equicorr::scenario::{Builtin, Scenario};
use equicorr::transform::{integral_transform, lift_kernel_to_filter, project_filter_to_kernel};
use equicorr::xcorr::cross_correlate;
use equicorr::Error;

#[derive(Parser)]
#[command(name = "equicorr", version, about = "Equivariant cross-correlation toolkit and verification battery")]
struct Cli {
    /// Override the constraint tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write JSON output here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every applicable validator.
    Validate { scenario: String },
    /// Cross-correlate the scenario filter with a section.
    Xcorr {
        scenario: String,
        #[arg(long)]
        section: PathBuf,
    },
    /// Apply the scenario kernel to a section.
    Transform {
        scenario: String,
        #[arg(long)]
        section: PathBuf,
    },
    /// Lift the scenario kernel to a filter.
    Lift {
        scenario: String,
        /// Which theta map to use when the scenario has several.
        #[arg(long)]
        theta: Option<String>,
    },
    /// Project the scenario filter to a kernel.
    Project { scenario: String },
    /// Write a scenario (typically a builtin) as scenario JSON.
    Export { scenario: String },
    /// Run the full property suite.
    Battery { scenario: String },
    /// Demonstrations.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Stabilizer-size scaling of bi-equivariant filters.
    Degeneracy {
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16])]
        sizes: Vec<usize>,
    },
}

enum Failure {
    Input(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

fn emit(output: Option<&Path>, json: &str) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, format!("{json}\n")).map_err(|e| Failure::Input(e.into())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output")
}

fn require_filter(s: &Scenario) -> Result<&equicorr::xcorr::Filter, Failure> {
    s.filter.as_ref().ok_or_else(|| Failure::Input(Error::Format(format!("scenario {} has no filter", s.name))))
}

fn require_kernel(s: &Scenario) -> Result<&equicorr::transform::Kernel, Failure> {
    s.kernel.as_ref().ok_or_else(|| Failure::Input(Error::Format(format!("scenario {} has no kernel", s.name))))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out = cli.output.as_deref();
    match cli.command {
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            let report = validate_scenario(&s, cli.tolerance);
            eprint!("{}", report.summary());
            emit(out, &report.to_json())?;
            if !report.passed() {
                return Err(Failure::Checks);
            }
        }
        Command::Xcorr { scenario, section } => {
            let s = load_scenario(&scenario)?;
            let f = SectionFile::read(&section)?.into_section(s.input.clone())?;
            let m = cross_correlate(require_filter(&s)?, &section_to_mackey(&f), &s.mu)?;
            emit(out, &to_json(&MackeyFile::from_mackey(&m)))?;
        }
        Command::Transform { scenario, section } => {
            let s = load_scenario(&scenario)?;
            let f = SectionFile::read(&section)?.into_section(s.input.clone())?;
            let t = integral_transform(require_kernel(&s)?, &s.mubar, &f)?;
            emit(out, &to_json(&SectionFile::from_section(&t)))?;
        }
        Command::Lift { scenario, theta } => {
            let s = load_scenario(&scenario)?;
            let kappa = require_kernel(&s)?;
            let theta = match theta {
                Some(name) => s.thetas.get(&name).ok_or_else(|| Error::Domain(format!("no theta named {name:?}")))?,
                None => s.thetas.values().next().ok_or_else(|| Error::Format("scenario has no theta map".into()))?,
            };
            let omega = lift_kernel_to_filter(kappa, theta, &s.delta_or_dirac()?)?;
            emit(out, &to_json(&filter_to_spec(&omega)))?;
        }
        Command::Project { scenario } => {
            let s = load_scenario(&scenario)?;
            let kappa = project_filter_to_kernel(require_filter(&s)?, &s.nu)?;
            emit(out, &to_json(&kernel_to_spec(&kappa)))?;
        }
        Command::Export { scenario } => {
            let s = load_scenario(&scenario)?;
            emit(out, &ScenarioFile::from_scenario(&s).to_json())?;
        }
        Command::Battery { scenario } => {
            let report = match Builtin::parse(&scenario).transpose()?.and_then(|b| b.line_grid()) {
                Some(grid) => run_line_grid_battery(&grid?, cli.seed),
                None => {
                    let s = load_scenario(&scenario)?;
                    let cfg = BatteryConfig { seed: cli.seed, tolerance: cli.tolerance, ..BatteryConfig::default() };
                    run_battery(&s, &cfg)?
                }
            };
            eprint!("{}", report.summary());
            emit(out, &report.to_json())?;
            if !report.passed() {
                return Err(Failure::Checks);
            }
        }
        Command::Demo { which: Demo::Degeneracy { sizes } } => {
            let table = degeneracy_demo(&sizes)?;
            eprint!("{}", table.render());
            emit(out, &to_json(&table))?;
            if !table.passed() {
                return Err(Failure::Checks);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

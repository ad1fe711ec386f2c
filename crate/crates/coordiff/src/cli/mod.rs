//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage or validation errors (nothing is
//! written), 2 when a comparison misses one of its tolerances.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use coordiff_core::diffusion::Masking;
use coordiff_core::theory::theory_report;
use serde_json::json;

use crate::experiments::{
    compare, horizon, monte_carlo, presets, steady_state, theory_json, CompareOptions, EnsembleOptions, ExperimentError,
    Scenario,
};
use config::{Config, Metric};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "coordiff", version, about = "Coordinate-descent diffusion learning: simulation and theory")]
struct Cli {
    /// Worker threads for Monte-Carlo runs.
    #[arg(long, global = true, env = "COORDIFF_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble and write its learning curve.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = MaskingArg::Coordinate)]
        masking: MaskingArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write the closed-form steady-state report.
    Theory {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Report)]
        format: Format,
    },
    /// Simulate both variants and check them against theory.
    Compare(CompareArgs),
    /// Run a preset end to end with its tolerances.
    Reproduce(CompareArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(presets::PRESET_NAMES))]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    /// Seed for the runs; scenario draws keep the document's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations per run; chosen from the theoretical rates when absent.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = Format::Report)]
    format: Format,
    /// Directory for the two learning curves as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Cross-check the weighted-norm excess risk against direct risk evaluation.
    #[arg(long)]
    direct_er: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskingArg {
    Coordinate,
    Full,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Tolerance(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::NotConverged { .. } => Failure::Tolerance(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn load(source: &Source) -> Result<(Scenario, String), Failure> {
    match (&source.config, &source.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Invalid(format!("cannot read config `{}`: {e}", path.display())))?;
            let config = Config::from_toml(&text)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            let scenario = Scenario::materialize(&config)?;
            let name = scenario.name.clone();
            Ok((scenario, name))
        }
        (None, Some(name)) => Ok((presets::load(name)?, name.clone())),
        _ => Err(Failure::Invalid("exactly one of --config and --preset is required".into())),
    }
}

fn compare_options(run: &RunArgs, threads: Option<u32>, direct_er: bool) -> CompareOptions {
    CompareOptions {
        runs: run.runs.map(|r| r as usize),
        seed: run.seed,
        horizon: run.horizon.map(|h| h as usize),
        threads: threads.map(|t| t as usize),
        direct_er,
    }
}

/// Collected outputs, written only once the command has succeeded.
#[derive(Default)]
struct Artifacts(Vec<(Option<PathBuf>, String)>);

impl Artifacts {
    fn push(&mut self, path: Option<&Path>, text: String) {
        self.0.push((path.map(Path::to_path_buf), text));
    }

    fn write(self) -> Result<(), String> {
        for (path, text) in self.0 {
            match path {
                Some(p) => std::fs::write(&p, text).map_err(|e| format!("cannot write `{}`: {e}", p.display()))?,
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string())?,
            }
        }
        Ok(())
    }
}

fn simulate(
    source: &Source,
    run: &RunArgs,
    masking: MaskingArg,
    format: Format,
    threads: Option<u32>,
    out: &mut Artifacts,
) -> Result<(), Failure> {
    let (scenario, name) = load(source)?;
    let built = scenario.build()?;
    let horizon = match run.horizon.map(|h| h as usize).or(scenario.horizon) {
        Some(h) => h,
        None => horizon(&built)?,
    };
    let masking = match masking {
        MaskingArg::Coordinate => Masking::Coordinate,
        MaskingArg::Full => Masking::FullGradient,
    };
    let options = EnsembleOptions {
        masking,
        runs: run.runs.map_or(scenario.runs, |r| r as usize),
        seed: run.seed.unwrap_or(scenario.seed),
        horizon,
        er: scenario.wants(Metric::Er),
        direct_er: false,
        threads: threads.map(|t| t as usize),
    };
    let curve = monte_carlo(&built.problem, &options, &scenario.hash())?;
    let text = match format {
        Format::Csv => curve.to_csv(),
        Format::Report => {
            let ss = |m| steady_state(&curve, m).ok().map(|s| s.db);
            let doc = json!({
                "preset": name,
                "seed": options.seed,
                "simulated": {
                    "masking": match masking { Masking::Coordinate => "coordinate", Masking::FullGradient => "full" },
                    "runs": curve.runs,
                    "horizon": horizon,
                    "scenario_hash": curve.scenario_hash,
                    "msd_steady_db": ss(Metric::Msd),
                    "er_steady_db": if scenario.wants(Metric::Er) { ss(Metric::Er) } else { None },
                    "msd_db": curve.msd_db,
                    "er_db": curve.er_db,
                },
            });
            serde_json::to_string_pretty(&doc).expect("documents serialize") + "\n"
        }
    };
    out.push(run.out.as_deref(), text);
    Ok(())
}

fn theory(source: &Source, path: Option<&Path>, format: Format, out: &mut Artifacts) -> Result<(), Failure> {
    if format == Format::Csv {
        return Err(Failure::Invalid("theory reports have no CSV form; use --format report".into()));
    }
    let (scenario, name) = load(source)?;
    let built = scenario.build()?;
    let report = theory_report(&built.theory, &built.context, Some(&built.costs)).map_err(ExperimentError::from)?;
    let doc = json!({ "preset": name, "seed": scenario.seed, "theory": theory_json(&report) });
    out.push(path, serde_json::to_string_pretty(&doc).expect("documents serialize") + "\n");
    Ok(())
}

fn compare_command(args: &CompareArgs, reproduce: bool, threads: Option<u32>, out: &mut Artifacts) -> Result<bool, Failure> {
    if args.format == Format::Csv {
        return Err(Failure::Invalid("comparisons are written as reports; use --curves DIR for CSV learning curves".into()));
    }
    if reproduce && args.source.config.is_some() {
        return Err(Failure::Invalid("reproduce takes --preset; use compare for --config".into()));
    }
    if let Some(dir) = &args.curves {
        if !dir.is_dir() {
            return Err(Failure::Invalid(format!("curve directory `{}` does not exist", dir.display())));
        }
    }
    let (scenario, name) = load(&args.source)?;
    let options = compare_options(&args.run, threads, args.direct_er);
    let (expect, reference) = if args.source.preset.is_some() {
        (presets::expectations(&name), presets::reference_values(&name))
    } else {
        (Default::default(), None)
    };
    let comparison = compare(&scenario, &options, expect, reference)?;
    out.push(args.run.out.as_deref(), comparison.report.to_json());
    if let Some(dir) = &args.curves {
        out.push(Some(&dir.join("coor.csv")), comparison.coor.to_csv());
        out.push(Some(&dir.join("grad.csv")), comparison.grad.to_csv());
    }
    let failures = comparison.report.failures();
    if !failures.is_empty() {
        eprintln!("tolerance failure: {}", failures.join(", "));
    }
    Ok(failures.is_empty())
}

/// Parses `argv` (including the program name), runs the command and returns the exit status.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let mut out = Artifacts::default();
    let result = match &cli.command {
        Command::Simulate { source, run, masking, format } => simulate(source, run, *masking, *format, cli.threads, &mut out).map(|_| true),
        Command::Theory { source, out: path, format } => theory(source, path.as_deref(), *format, &mut out).map(|_| true),
        Command::Compare(args) => compare_command(args, false, cli.threads, &mut out),
        Command::Reproduce(args) => compare_command(args, true, cli.threads, &mut out),
    };
    match result {
        Ok(passed) => {
            if let Err(e) = out.write() {
                eprintln!("error: {e}");
                return EXIT_INVALID;
            }
            if passed {
                EXIT_OK
            } else {
                EXIT_TOLERANCE
            }
        }
        Err(Failure::Invalid(message)) => {
            eprintln!("error: {message}");
            EXIT_INVALID
        }
        Err(Failure::Tolerance(message)) => {
            eprintln!("tolerance failure: {message}");
            EXIT_TOLERANCE
        }
    }
}

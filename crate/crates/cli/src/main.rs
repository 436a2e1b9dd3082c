//! `sloc`: run stochastic localization simulations and verification suites.

mod commands;
mod config;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sloc_core::io::write_json;
use sloc_core::suites::{Relation, Report};

use commands::RunContext;
use config::{ConfigErrors, ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "sloc", version, about = "Stochastic localization experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one construction and export trajectories.
    Simulate(RunArgs),
    /// Cross-construction equivalence suites.
    Equiv(RunArgs),
    /// Proximal sampler contraction, kernel identity and stability.
    Rgd(RunArgs),
    /// Sinkhorn, Schrödinger bridge and Föllmer energy suites.
    Bridge(RunArgs),
    /// Log-Sobolev schedule tables and bounds.
    Lsi(RunArgs),
    /// Aggregate report files or run directories.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; falls back to the config, then SLOC_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// `report.json` files or directories containing one.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for `summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<ConfigErrors>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let (name, args, f): (&str, RunArgs, fn(&RunContext) -> Result<Vec<_>>) = match cli.command {
        Command::Simulate(a) => ("simulate", a, commands::simulate),
        Command::Equiv(a) => ("equiv", a, commands::equiv),
        Command::Rgd(a) => ("rgd", a, commands::rgd),
        Command::Bridge(a) => ("bridge", a, commands::bridge),
        Command::Lsi(a) => ("lsi", a, commands::lsi),
        Command::Report(a) => return report(a),
    };
    let config = resolve_config(&args)?;
    if let Some(n) = args.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("starting worker pool")?;
    }
    let seed = resolve_seed(args.seed, config.seed)?;
    let target = config.target.build().map_err(|e| ConfigErrors(vec![format!("target: {e}")]))?;
    let out = config.out.clone();
    commands::ensure_dir(&out)?;
    let cx = RunContext { config: &config, target, seed, out: out.clone() };
    let checks = f(&cx)?;
    let report = Report::new(name, seed, checks);
    for c in &report.checks {
        println!("{}", c.line());
    }
    println!("{} {name} (seed {seed}): {} checks", if report.pass { "PASS" } else { "FAIL" }, report.checks.len());
    let mut resolved = config.clone();
    resolved.seed = Some(seed);
    write_json(File::create(out.join("config.json"))?, &resolved)?;
    write_report(&out, "report", &[&report], &report, config.format)?;
    Ok(if report.pass { Outcome::Pass } else { Outcome::Fail })
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let loaded = config::validate_config(path)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            loaded.config
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = args.paths {
        config.paths = p;
    }
    if let Some(dt) = args.dt {
        config.dt = dt;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(f) = args.format {
        config.format = f.into();
    }
    let errors = config::validate(&config);
    if !errors.is_empty() {
        return Err(ConfigErrors(errors).into());
    }
    Ok(config)
}

fn resolve_seed(flag: Option<u64>, from_config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(from_config) {
        return Ok(s);
    }
    match std::env::var("SLOC_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| ConfigErrors(vec![format!("SLOC_SEED must be an unsigned integer, got {v:?}")]).into()),
        Err(_) => Ok(0),
    }
}

#[derive(Serialize)]
struct CheckRow<'a> {
    command: &'a str,
    name: &'a str,
    observed: f64,
    tolerance: f64,
    relation: Relation,
    pass: bool,
}

/// `name.json` always; `name.csv` too when CSV output is requested. The CSV
/// omits runtimes so it is byte-identical across runs with the same seed.
fn write_report(out: &Path, name: &str, reports: &[&Report], json: &impl Serialize, format: Format) -> Result<()> {
    write_json(File::create(out.join(format!("{name}.json")))?, json)?;
    if format == Format::Csv {
        let mut w = csv::Writer::from_path(out.join(format!("{name}.csv")))?;
        for r in reports {
            for c in &r.checks {
                w.serialize(CheckRow {
                    command: &r.command,
                    name: &c.name,
                    observed: c.observed,
                    tolerance: c.tolerance,
                    relation: c.relation,
                    pass: c.pass,
                })?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    pass: bool,
    reports: Vec<Report>,
    sources: Vec<PathBuf>,
}

fn report(args: ReportArgs) -> Result<Outcome> {
    let found = commands::collect_reports(&args.inputs)?;
    for (path, r) in &found {
        let failed = r.checks.iter().filter(|c| !c.pass).count();
        println!(
            "{} {} (seed {}) {}: {}/{} checks pass",
            if r.pass { "PASS" } else { "FAIL" },
            r.command,
            r.seed,
            path.display(),
            r.checks.len() - failed,
            r.checks.len()
        );
        for c in r.checks.iter().filter(|c| !c.pass) {
            println!("    {}", c.line());
        }
    }
    let pass = found.iter().all(|(_, r)| r.pass);
    let (sources, reports) = found.into_iter().unzip();
    let summary = Summary { pass, reports, sources };
    if let Some(out) = &args.out {
        commands::ensure_dir(out)?;
        let refs: Vec<&Report> = summary.reports.iter().collect();
        write_report(out, "summary", &refs, &summary, args.format.map_or(Format::Json, Into::into))?;
    }
    println!("{} {} reports", if pass { "PASS" } else { "FAIL" }, summary.reports.len());
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

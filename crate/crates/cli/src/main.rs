//! `junction`: command-line front end for junction-sim.
//!
//! Exit status is 0 on success, 1 on errors, and 2 when a run completed but a
//! check failed (`validate`, `experiment`, `report`).

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use junction_sim::config::ExperimentConfig;
use junction_sim::engine::{write_ensemble, OutputFormat, Simulator, WORKERS_ENV};
use junction_sim::experiments::{run_experiment, RunOptions, SummaryRecord, SUMMARY_FILE};
use junction_sim::io::{read_path_binary, read_path_csv};
use junction_sim::ito::{ito_residual, validate_test_function, ResidualMode, TestFunction, TestFunctionGrid, CATALOG};
use junction_sim::local_time::{
    jump_count_local_time, occupation_local_time, phi_decomposition_local_time, LocalTimeSeries,
};
use junction_sim::validation::{validate_assumption_h, SamplingGrid, ValidationReport};
use junction_sim::PathRecord;

#[derive(Parser, Debug)]
#[command(name = "junction", version, about = "Simulate diffusions on a star graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Output directory; overrides `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Binary,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Binary => OutputFormat::Binary,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Estimator {
    JumpCount,
    Occupation,
    Phi,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    AgainstLocalTime,
    AgainstStochasticIntegral,
}

#[derive(clap::Args, Debug, Clone)]
struct PathSource {
    /// Read the path from a CSV or binary path file instead of simulating.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Index of the simulated path.
    #[arg(long, default_value_t = 0)]
    path: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the coefficient assumptions and the configured test functions.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate `experiment.n_paths` paths and write them with a manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides `experiment.n_paths`.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Local-time series of one path.
    Localtime {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: PathSource,
        #[arg(long, value_enum, default_value_t = Estimator::JumpCount)]
        estimator: Estimator,
        /// Window for the occupation and phi estimators.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Edge subset for the occupation estimator, e.g. `1,2`.
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<usize>>,
    },
    /// Itô residual series of one path for a catalog test function.
    Ito {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: PathSource,
        #[arg(long)]
        function: String,
        #[arg(long, value_enum, default_value_t = Mode::AgainstLocalTime)]
        mode: Mode,
    },
    /// Run the named experiment from the config.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Print pass/fail listings of summary files or result directories.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.experiment.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn workers(common: &Common, cfg: &ExperimentConfig) -> usize {
    common.workers.or(cfg.experiment.workers).unwrap_or(0)
}

/// Writes `text` to `dir/name`, or to stdout without a directory.
fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let target = dir.join(name);
            fs::write(&target, text).with_context(|| format!("writing {}", target.display()))?;
            eprintln!("wrote {}", target.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_path(cfg: &ExperimentConfig, source: &PathSource) -> Result<PathRecord> {
    match &source.input {
        Some(file) => {
            let f = fs::File::open(file).with_context(|| format!("opening {}", file.display()))?;
            let p = if file.extension().is_some_and(|e| e == "csv") {
                read_path_csv(BufReader::new(f))
            } else {
                read_path_binary(BufReader::new(f))
            };
            p.with_context(|| format!("reading {}", file.display()))
        }
        None => Ok(Simulator::new(cfg.sim_config()?)?.path(source.path)?),
    }
}

fn print_report(r: &ValidationReport) {
    println!("{}: {}", r.subject, if r.passed { "PASS" } else { "FAIL" });
    for item in &r.items {
        let edge = item.edge.map(|e| format!(" edge {e}")).unwrap_or_default();
        println!(
            "  [{}] {}{edge}: {} (limit {})",
            if item.passed { "pass" } else { "FAIL" },
            item.name,
            item.observed,
            item.limit
        );
    }
}

fn validate(common: &Common) -> Result<bool> {
    let cfg = load(common)?;
    let sim = cfg.sim_config()?;
    let mut reports = vec![validate_assumption_h(
        &sim.field,
        &sim.alpha,
        &SamplingGrid::for_start(&sim.field, sim.x0),
    )?];
    let names: Vec<String> = if cfg.ito.functions.is_empty() {
        CATALOG.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.ito.functions.clone()
    };
    for name in &names {
        let f = TestFunction::catalog(name, sim.alpha.edge_count())?;
        reports.push(validate_test_function(&f, sim.horizon, &TestFunctionGrid::default()));
    }
    for r in &reports {
        print_report(r);
        println!("  note: {}", r.note);
    }
    if let Some(dir) = &cfg.experiment.output_dir {
        emit(Some(dir), "validation.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn simulate(common: &Common, paths: Option<usize>) -> Result<()> {
    let cfg = load(common)?;
    let Some(dir) = cfg.experiment.output_dir.clone() else {
        bail!("simulate needs --out or experiment.output_dir");
    };
    let sim = Simulator::new(cfg.sim_config()?)?;
    for w in sim.warnings() {
        eprintln!("warning: {w}");
    }
    let n = paths.unwrap_or(cfg.experiment.n_paths);
    let records = sim.batch(n, workers(common, &cfg))?;
    let manifest = write_ensemble(&dir, &sim, &records, common.format.into())?;
    eprintln!("wrote {} paths ({} steps each) to {}", n, manifest.steps, dir.display());
    Ok(())
}

fn localtime(
    common: &Common,
    source: &PathSource,
    estimator: Estimator,
    epsilon: Option<f64>,
    subset: Option<&[usize]>,
) -> Result<()> {
    let cfg = load(common)?;
    let p = load_path(&cfg, source)?;
    let field = cfg.field()?;
    let alpha = cfg.alpha()?;
    let need_eps = || epsilon.context("this estimator needs --epsilon");
    let series: LocalTimeSeries = match estimator {
        Estimator::JumpCount => jump_count_local_time(&p)?,
        Estimator::Occupation => occupation_local_time(&p, &field, &alpha, need_eps()?, subset)?,
        Estimator::Phi => phi_decomposition_local_time(&p, &field, need_eps()?)?,
    };
    emit(cfg.experiment.output_dir.as_deref(), "local_time.csv", &series.to_csv())
}

fn ito(common: &Common, source: &PathSource, function: &str, mode: Mode) -> Result<()> {
    let cfg = load(common)?;
    let p = load_path(&cfg, source)?;
    let field = cfg.field()?;
    let alpha = cfg.alpha()?;
    let f = TestFunction::catalog(function, alpha.edge_count())?;
    let l = jump_count_local_time(&p)?;
    let mode = match mode {
        Mode::AgainstLocalTime => ResidualMode::AgainstLocalTime,
        Mode::AgainstStochasticIntegral => ResidualMode::AgainstStochasticIntegral,
    };
    let r = ito_residual(&p, &f, &field, &alpha, &l, mode)?;
    emit(cfg.experiment.output_dir.as_deref(), &format!("residual_{function}_{mode}.csv"), &r.to_csv())
}

fn experiment(common: &Common) -> Result<bool> {
    let cfg = load(common)?;
    let opts = RunOptions {
        workers: workers(common, &cfg),
        format: common.format.into(),
        ..RunOptions::from_config(&cfg)
    };
    let summary = run_experiment(&cfg, &opts)?;
    print!("{}", summary.report());
    if opts.out_dir.is_none() {
        print!("{}", summary.to_json());
    }
    Ok(summary.passed)
}

fn report(inputs: &[PathBuf]) -> Result<bool> {
    let mut all = true;
    for input in inputs {
        let file = if input.is_dir() { input.join(SUMMARY_FILE) } else { input.clone() };
        let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let summary = SummaryRecord::from_json(&text).with_context(|| format!("parsing {}", file.display()))?;
        print!("{}", summary.report());
        all &= summary.passed;
    }
    Ok(all)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { common } => validate(&common),
        Command::Simulate { common, paths } => simulate(&common, paths).map(|_| true),
        Command::Localtime {
            common,
            source,
            estimator,
            epsilon,
            subset,
        } => localtime(&common, &source, estimator, epsilon, subset.as_deref()).map(|_| true),
        Command::Ito {
            common,
            source,
            function,
            mode,
        } => ito(&common, &source, &function, mode).map(|_| true),
        Command::Experiment { common } => experiment(&common),
        Command::Report { inputs } => report(&inputs),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line entry point: `rank`, `test`, `simulate`, `bench`.

use std::ffi::OsString;
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::hypotest::Method;
use crate::platform::{analyze, export_ranks, load_metrics, AnalysisRequest, OutputFormat};
use crate::rankcore::compute_global_ranks;
use crate::simlab::{
    self, render_study_csv, render_study_json, render_study_table, render_timing_csv, render_timing_json,
    render_timing_table, run_study_on, PreparedPopulation, RankingBase, SimulationConfig, StudyKind, TimingOptions,
};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "GLOBALRANK_SEED";

#[derive(Debug, Parser)]
#[command(name = "globalrank", version, about = "Rank once, test many: rank-sum testing for overlapping A/B experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank a population once and export `user_id,rank`.
    Rank(RankArgs),
    /// Test every experiment in an assignments file.
    Test(TestArgs),
    /// Type-I calibration (no --gamma) or power study (one or more --gamma).
    Simulate(SimulateArgs),
    /// Time per-experiment sorting against one global sort.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for tie-breaking and simulation (default 0).
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    /// Significance level; repeat for several.
    #[arg(long = "alpha", num_args = 1)]
    alphas: Vec<f64>,
    /// table, delimited (csv) or structured (json).
    #[arg(long, default_value = "table")]
    format: OutputFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn alphas(&self) -> Vec<f64> {
        if self.alphas.is_empty() {
            vec![0.01, 0.05, 0.10]
        } else {
            self.alphas.clone()
        }
    }
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    metrics: PathBuf,
    /// Input files start with a header line.
    #[arg(long)]
    header: bool,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    assignments: PathBuf,
    #[arg(long)]
    header: bool,
    /// t_test, rank_sum or global_rank_sum; repeat for several (default: all).
    #[arg(long = "method", num_args = 1)]
    methods: Vec<Method>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML file with simulation settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    n_treatment: Option<usize>,
    #[arg(long)]
    n_control: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    /// Lift ratio; repeat for a power table.
    #[arg(long = "gamma", num_args = 1)]
    gammas: Vec<f64>,
    /// lifted_population or experiment_only.
    #[arg(long)]
    ranking_base: Option<RankingBase>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Number of experiments; repeat for a sweep.
    #[arg(long = "experiments", num_args = 1)]
    experiments: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    population: usize,
    /// Users per experiment (default: population / 5).
    #[arg(long)]
    experiment_size: Option<usize>,
    #[arg(long, allow_hyphen_values = true, default_value_t = -3.0)]
    mu: f64,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Timed runs per path; the median is reported.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[command(flatten)]
    common: Common,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn run_rank(args: RankArgs) -> Result<()> {
    let records = load_metrics(&args.metrics, args.header)?;
    let table = compute_global_ranks(&records, args.seed)?;
    match &args.out {
        Some(path) => export_ranks(&table, File::create(path).map_err(|e| Error::io(path, e))?),
        None => export_ranks(&table, std::io::stdout().lock()),
    }
}

fn run_test(args: TestArgs) -> Result<()> {
    let request = AnalysisRequest {
        metrics_path: args.metrics,
        assignments_path: args.assignments,
        has_header: args.header,
        tiebreak_seed: args.common.seed.unwrap_or(0),
        alphas: args.common.alphas(),
        methods: if args.methods.is_empty() { Method::ALL.to_vec() } else { args.methods },
        output_path: args.common.out.clone(),
        output_format: args.common.format,
    };
    with_threads(args.common.threads, || analyze(&request).map(|_| ()))
}

fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => SimulationConfig::default(),
    };
    if let Some(v) = args.mu {
        cfg.mu = v;
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.population {
        cfg.population_size = v;
    }
    if let Some(v) = args.n_treatment {
        cfg.n_treatment = v;
    }
    if let Some(v) = args.n_control {
        cfg.n_control = v;
    }
    if let Some(v) = args.replications {
        cfg.replications = v;
    }
    if let Some(v) = args.ranking_base {
        cfg.ranking_base = v;
    }
    if !args.common.alphas.is_empty() {
        cfg.alphas = args.common.alphas.clone();
    }
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let cfg = simulation_config(&args)?;
    let gammas: Vec<f64> = if !args.gammas.is_empty() {
        args.gammas.clone()
    } else if cfg.lift_ratio > 0.0 {
        vec![cfg.lift_ratio]
    } else {
        Vec::new()
    };
    let reports = with_threads(args.common.threads, || {
        let base = SimulationConfig { lift_ratio: 0.0, ..cfg.clone() };
        base.validate()?;
        let prepared = PreparedPopulation::generate(&base)?;
        if gammas.is_empty() {
            Ok(vec![run_study_on(&prepared, &base, StudyKind::Calibration)?])
        } else {
            gammas
                .iter()
                .map(|&g| run_study_on(&prepared, &SimulationConfig { lift_ratio: g, ..base.clone() }, StudyKind::Power))
                .collect()
        }
    })?;
    let text = match args.common.format {
        OutputFormat::Table => render_study_table(&reports),
        OutputFormat::Delimited => render_study_csv(&reports)?,
        OutputFormat::Structured => render_study_json(&reports)?,
    };
    write_output(args.common.out.as_deref(), &text)
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let m = args.experiment_size.unwrap_or(args.population / 5);
    let cfg = SimulationConfig {
        mu: args.mu,
        sigma: args.sigma,
        population_size: args.population,
        n_treatment: m / 2,
        n_control: m - m / 2,
        seed: args.common.seed.unwrap_or(0),
        ..Default::default()
    };
    let counts = if args.experiments.is_empty() {
        vec![1, 10, 50, 100]
    } else {
        args.experiments.clone()
    };
    let options = TimingOptions {
        runs: args.runs,
        threads: args.common.threads.unwrap_or(1),
    };
    let rows = simlab::run_timing_sweep(&counts, &cfg, &options)?;
    let text = match args.common.format {
        OutputFormat::Table => render_timing_table(&rows),
        OutputFormat::Delimited => render_timing_csv(&rows)?,
        OutputFormat::Structured => render_timing_json(&rows)?,
    };
    write_output(args.common.out.as_deref(), &text)
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Rank(a) => run_rank(a),
        Command::Test(a) => run_test(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridsim::cost::StrategyParams;
use gridsim::domain::Scenario;
use gridsim::engine::{run, FailureModel, RunLimit, DEFAULT_REPAIR_TIME};
use gridsim::generate::{generate_scenario, ArrivalMode, GenerateOptions};
use gridsim::properties::{parse_properties, presets, GridProperties, JobProperties, PropertyFile, UserProperties};
use gridsim::report::{emit_report, read_report, read_scenario, summary_rows, write_scenario, ReportFormat};
use gridsim::sweep::{run_sweep, write_sweep, Regime, ScenarioSource, SweepParameter, SweepSpec};

const OUT_DIR_ENV: &str = "GRIDSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "gridsim", version, about = "Grid scheduling simulator")]
struct Cli {
    /// Default output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "gridsim-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario from property files.
    Gen(GenArgs),
    /// Simulate one scenario and write its report.
    Run(RunArgs),
    /// Run a parameter sweep over seeds and write per-figure tables.
    Sweep(SweepArgs),
    /// Summarize a scenario file or a report directory.
    Stats(StatsArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Grid property file.
    #[arg(long, conflicts_with = "preset")]
    grid: Option<PathBuf>,
    /// Published grid column instead of a grid file, e.g. G7.
    #[arg(long)]
    preset: Option<String>,
    /// User property file.
    #[arg(long, conflicts_with = "user_group")]
    users: Option<PathBuf>,
    /// Built-in user population (1 or 2) instead of a user file.
    #[arg(long)]
    user_group: Option<u32>,
    /// Job property file; defaults to the built-in job ranges.
    #[arg(long)]
    jobs: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    job_sets: u32,
    #[arg(long, default_value_t = 10)]
    jobs_per_set: u32,
    /// Arrival window in ticks.
    #[arg(long, default_value_t = 100)]
    arrival_horizon: u64,
    /// Front-load arrivals into the first quarter of the window.
    #[arg(long)]
    peak: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; defaults to scenario.json in the output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct StrategyArgs {
    #[arg(long, default_value_t = 0.0)]
    fp: f64,
    #[arg(long, default_value_t = 0.0)]
    qp: f64,
    #[arg(long, default_value_t = 0.0)]
    sp: f64,
    #[arg(long)]
    balance_global: bool,
    #[arg(long)]
    balance_local: bool,
}

impl StrategyArgs {
    fn params(&self) -> Result<StrategyParams> {
        let p = StrategyParams {
            fp: self.fp,
            qp: self.qp,
            sp: self.sp,
            balance_global: self.balance_global,
            balance_local: self.balance_local,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Clone)]
struct SimArgs {
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Seed for component failures.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give up on runs that are not finished after this many ticks.
    #[arg(long, default_value_t = 100_000)]
    max_ticks: u64,
    /// Run exactly this many ticks instead of until every job is done.
    #[arg(long, conflicts_with = "max_ticks")]
    horizon: Option<u64>,
    #[arg(long)]
    no_machine_failures: bool,
    #[arg(long)]
    no_resource_failures: bool,
    #[arg(long)]
    user_failures: bool,
    #[arg(long, default_value_t = DEFAULT_REPAIR_TIME)]
    repair_time: u64,
}

impl SimArgs {
    fn failures(&self) -> FailureModel {
        FailureModel {
            machines: !self.no_machine_failures,
            resource_networks: !self.no_resource_failures,
            user_networks: self.user_failures,
            repair_time: self.repair_time,
            seed: self.seed,
        }
    }

    fn limit(&self) -> RunLimit {
        match self.horizon {
            Some(h) => RunLimit::Horizon(h),
            None => RunLimit::AllTerminal(self.max_ticks),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON written by `gen`.
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Output directory; defaults to the global output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Sp,
    Fp,
    Qp,
    Balance,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    UnderPeak,
    InPeak,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    parameter: ParamArg,
    /// Comma-separated values, e.g. 0,0.5,1,1.5,2.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Comma-separated seeds or an inclusive range such as 1..10.
    #[arg(long, default_value = "1..10")]
    seeds: String,
    /// Fixed scenario JSON; otherwise a scenario is generated per seed.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "under-peak")]
    regime: RegimeArg,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// A scenario JSON file or a report directory.
    path: PathBuf,
}

/// Input problems exit with 1, truncated runs with 2.
enum Status {
    Ok,
    Truncated,
}

fn read_props<P: PropertyFile>(path: &Path) -> Result<P> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_properties(&text).with_context(|| format!("{}", path.display()))
}

impl SourceArgs {
    fn properties(&self) -> Result<(GridProperties, UserProperties, JobProperties)> {
        let grid = match (&self.grid, &self.preset) {
            (Some(p), _) => read_props(p)?,
            (None, Some(name)) => presets::grid_preset(name)?,
            (None, None) => bail!("one of --grid or --preset is required"),
        };
        let users = match (&self.users, self.user_group) {
            (Some(p), _) => read_props(p)?,
            (None, Some(g)) => presets::user_group(g)?,
            (None, None) => presets::user_group(1)?,
        };
        let jobs = match &self.jobs {
            Some(p) => read_props(p)?,
            None => presets::JOBS,
        };
        Ok((grid, users, jobs))
    }

    fn options(&self) -> GenerateOptions {
        GenerateOptions {
            n_job_sets: self.job_sets,
            jobs_per_set: self.jobs_per_set,
            horizon: self.arrival_horizon,
            arrivals: if self.peak { ArrivalMode::Peak } else { ArrivalMode::Spread },
            qos_extremes: false,
        }
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let s = read_scenario(path)?;
    s.validate().with_context(|| format!("{}", path.display()))?;
    Ok(s)
}

fn cmd_gen(args: GenArgs, out_dir: &Path) -> Result<Status> {
    let (grid, users, jobs) = args.source.properties()?;
    let scenario = generate_scenario(&grid, &users, &jobs, &args.source.options(), args.seed);
    let out = args.out.unwrap_or_else(|| out_dir.join("scenario.json"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_scenario(&out, &scenario)?;
    println!(
        "wrote {} ({} resources, {} machines, {} users, {} jobs)",
        out.display(),
        scenario.resources.len(),
        scenario.machine_count(),
        scenario.users.len(),
        scenario.jobs.len()
    );
    Ok(Status::Ok)
}

fn cmd_run(args: RunArgs, out_dir: &Path) -> Result<Status> {
    let scenario = load_scenario(&args.scenario)?;
    let params = args.sim.strategy.params()?;
    let report = run(scenario, params, args.sim.failures(), args.sim.limit())?;
    let out = args.out.unwrap_or_else(|| out_dir.to_path_buf());
    let format = match args.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
        Format::Both => ReportFormat::Both,
    };
    for f in emit_report(&report, &out, format)? {
        println!("wrote {}", f.display());
    }
    let m = &report.metrics;
    println!(
        "{} jobs: {} processed, {} failed, {} removed; {} ticks",
        m.total_jobs, m.processed, m.failed, m.removed, m.ticks
    );
    if m.truncated {
        eprintln!("warning: stopped at --max-ticks {} with jobs still pending", m.ticks);
        return Ok(Status::Truncated);
    }
    Ok(Status::Ok)
}

fn cmd_sweep(args: SweepArgs, out_dir: &Path) -> Result<Status> {
    let scenario = match &args.scenario {
        Some(p) => ScenarioSource::Fixed(load_scenario(p)?),
        None => {
            let (grid, users, jobs) = args.source.properties()?;
            ScenarioSource::Generated {
                grid,
                users,
                jobs,
                options: args.source.options(),
            }
        }
    };
    let spec = SweepSpec {
        parameter: match args.parameter {
            ParamArg::Sp => SweepParameter::Sp,
            ParamArg::Fp => SweepParameter::Fp,
            ParamArg::Qp => SweepParameter::Qp,
            ParamArg::Balance => SweepParameter::Balance,
        },
        values: args.values,
        seeds: parse_seeds(&args.seeds)?,
        scenario,
        regime: match args.regime {
            RegimeArg::UnderPeak => Regime::UnderPeak,
            RegimeArg::InPeak => Regime::InPeak,
        },
        base: args.sim.strategy.params()?,
        failures: args.sim.failures(),
        limit: args.sim.limit(),
    };
    let result = run_sweep(&spec)?;
    let out = args.out.unwrap_or_else(|| out_dir.to_path_buf());
    for f in write_sweep(&result, &out)? {
        println!("wrote {}", f.display());
    }
    let truncated: u64 = result.cells.iter().map(|c| c.truncated_runs).sum();
    if truncated > 0 {
        eprintln!("warning: {truncated} runs stopped at --max-ticks with jobs still pending");
        return Ok(Status::Truncated);
    }
    Ok(Status::Ok)
}

fn cmd_stats(args: StatsArgs) -> Result<Status> {
    if args.path.is_dir() {
        let report = read_report(&args.path)?;
        for (k, v) in summary_rows(&report.metrics) {
            println!("{k},{v}");
        }
        return Ok(if report.metrics.truncated { Status::Truncated } else { Status::Ok });
    }
    let s = load_scenario(&args.path)?;
    let procs: u32 = s.resources.iter().map(|r| r.total_procs()).sum();
    let first = s.jobs.iter().map(|j| j.arrival_time).min().unwrap_or(0);
    let last = s.jobs.iter().map(|j| j.arrival_time).max().unwrap_or(0);
    println!("resources,{}", s.resources.len());
    println!("machines,{}", s.machine_count());
    println!("processors,{procs}");
    println!("users,{}", s.users.len());
    println!("jobs,{}", s.jobs.len());
    println!("first_arrival,{first}");
    println!("last_arrival,{last}");
    Ok(Status::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a, &cli.out_dir),
        Command::Run(a) => cmd_run(a, &cli.out_dir),
        Command::Sweep(a) => cmd_sweep(a, &cli.out_dir),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Truncated) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

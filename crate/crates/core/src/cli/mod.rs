//! Command-line front end: `validate`, `run`, `assign` and `sweep`.
//!
//! Exit codes: 0 on success, 1 for I/O or JSON syntax errors, 2 for schema,
//! validation and usage errors.

pub mod output;
pub mod scenario_file;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::engine::{self, rng, EngineError, Metrics, SlotLedger};
use crate::fairshare::{
    jain_index, predicted_app_rates, qwap_exhaustive, qwap_greedy, qwap_random, FairnessScore, FairshareError,
};
use crate::model::{Assignment, Diagnostic, Scenario};
use crate::routing::Flow;
use crate::scheduling::Policy;
use output::{fmt_num, to_csv};
use scenario_file::{
    load_scenario, read_json, resolve_parameter, set_parameter, spec_from_value, validate_spec, Overrides,
};

/// Environment variable naming the output directory when `--output-dir` is absent.
pub const OUTPUT_DIR_ENV: &str = "DQCSIM_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Fairshare(#[from] FairshareError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => 1,
            CliError::Invalid(_) | CliError::Usage(_) | CliError::Engine(_) | CliError::Fairshare(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dqcsim",
    version,
    about = "Entanglement sharing simulator for distributed quantum computing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and report every violation.
    Validate {
        /// Scenario JSON file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate a scenario and write per_app.csv and global.csv.
    Run(RunArgs),
    /// Solve the worker assignment and print predicted rates.
    Assign(AssignArgs),
    /// Run once per value of a parameter and concatenate the CSV output.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct OverrideArgs {
    /// Master seed, replacing sim.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Slot count, replacing sim.slots.
    #[arg(long)]
    pub slots: Option<u64>,
    /// FCFS, RR, WRR or DRR, replacing sim.policy.
    #[arg(long)]
    pub policy: Option<Policy>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            slots: a.slots,
            policy: a.policy,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Also write the per-slot ledger to trace.csv.
    #[arg(long)]
    pub trace: bool,
    /// Directory for the CSV files.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Greedy,
    Random,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Assignment solver.
    #[arg(long, value_enum, default_value_t = Solver::Greedy)]
    pub solver: Solver,
    /// Largest search space the exhaustive solver may enumerate.
    #[arg(long)]
    pub limit: Option<u128>,
    /// Report layout.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Seed of the random solver.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// `policy`, `seed`, `quantum_base`, or a dotted path such as `apps.0.weight`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values, one run per value.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Directory for the CSV files.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
    pub output_dir: PathBuf,
}

/// Parses arguments, runs the command, prints results, and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs a command and returns what it prints on success.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Validate { config } => cmd_validate(config),
        Command::Run(a) => cmd_run(a),
        Command::Assign(a) => cmd_assign(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

pub fn cmd_validate(config: &Path) -> Result<String, CliError> {
    load_scenario(config, &Overrides::default())?;
    Ok("OK\n".into())
}

/// Seed, flows, and per-slot ledgers of one traced replication.
type Trace = (u64, Vec<Vec<Flow>>, Vec<SlotLedger>);

/// Metrics of every replication, plus traces when requested.
struct RunOutput {
    runs: Vec<Metrics>,
    traces: Vec<Trace>,
}

fn simulate(scenario: &Scenario, trace: bool) -> Result<RunOutput, CliError> {
    let n = scenario.sim().replications;
    if !trace {
        let r = engine::replicate(scenario, n)?;
        return Ok(RunOutput {
            runs: r.runs,
            traces: Vec::new(),
        });
    }
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for i in 0..u64::from(n) {
        let seed = rng::replication_seed(scenario.sim().seed, i);
        let mut sim = engine::Simulation::new(scenario, seed)?;
        let mut ledgers = Vec::new();
        while !sim.is_done() {
            ledgers.push(sim.step());
        }
        let flows = sim.flows().to_vec();
        runs.push(sim.finish());
        traces.push((seed, flows, ledgers));
    }
    Ok(RunOutput { runs, traces })
}

fn per_app_csv(runs: &[Metrics], tag: Option<&str>) -> Vec<Vec<String>> {
    runs.iter()
        .flat_map(output::per_app_rows)
        .map(|r| with_tag(tag, r))
        .collect()
}

fn global_csv(runs: &[Metrics], tag: Option<&str>) -> Vec<Vec<String>> {
    runs.iter().map(output::global_row).map(|r| with_tag(tag, r)).collect()
}

fn with_tag(tag: Option<&str>, mut row: Vec<String>) -> Vec<String> {
    if let Some(t) = tag {
        row.insert(0, t.to_string());
    }
    row
}

fn trace_csv(traces: &[Trace]) -> String {
    let multi = traces.len() > 1;
    let mut header: Vec<&str> = output::TRACE_HEADER.to_vec();
    if multi {
        header.insert(0, "seed");
    }
    let rows: Vec<Vec<String>> = traces
        .iter()
        .flat_map(|(seed, flows, ledgers)| {
            ledgers.iter().flat_map(move |l| {
                output::trace_rows(flows, l)
                    .into_iter()
                    .map(move |r| with_tag(multi.then(|| seed.to_string()).as_deref(), r))
            })
        })
        .collect();
    to_csv(&header, &rows)
}

/// Writes all files or none: on failure the ones already written are removed.
fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<(), CliError> {
    let io_err = |path: &Path, source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, content) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(io_err(&path, e));
        }
        written.push(path);
    }
    Ok(())
}

fn summary(scenario: &Scenario, runs: &[Metrics]) -> String {
    let sim = scenario.sim();
    let agg = engine::aggregate(runs);
    let stat = |name: &str| agg.iter().find(|a| a.name == name);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "policy {}  slots {} (warmup {})  seed {}  replications {}",
        sim.policy,
        sim.slots,
        sim.warmup,
        sim.seed,
        runs.len()
    );
    for app in scenario.apps() {
        let workers: Vec<String> = runs[0]
            .assignment
            .workers(app.id)
            .iter()
            .map(ToString::to_string)
            .collect();
        let _ = write!(
            s,
            "app {} (weight {}, workers [{}]):",
            app.id,
            fmt_num(app.weight),
            workers.join(", ")
        );
        for key in ["rate_per_slot", "weighted_rate", "mean_latency_slots"] {
            if let Some(a) = stat(&format!("app{}.{key}", app.id)) {
                let _ = write!(s, "  {key} {}", output::mean_sd(a.mean, a.std_dev, a.count));
            }
        }
        s.push('\n');
    }
    match stat("jain_weighted") {
        Some(a) => {
            let _ = writeln!(
                s,
                "jain (weighted rates): {}",
                output::mean_sd(a.mean, a.std_dev, a.count)
            );
        }
        None => s.push_str("jain (weighted rates): NA\n"),
    }
    if let Some(a) = stat("total_delivered") {
        let _ = writeln!(s, "total delivered: {}", output::mean_sd(a.mean, a.std_dev, a.count));
    }
    s
}

pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let scenario = load_scenario(&args.config, &(&args.overrides).into())?;
    let out = simulate(&scenario, args.trace)?;
    let edges = scenario.graph().link_count();
    let mut files = vec![
        (
            "per_app.csv",
            to_csv(&output::PER_APP_HEADER, &per_app_csv(&out.runs, None)),
        ),
        (
            "global.csv",
            to_csv(&output::global_header(edges), &global_csv(&out.runs, None)),
        ),
    ];
    if args.trace {
        files.push(("trace.csv", trace_csv(&out.traces)));
    }
    write_outputs(&args.output_dir, &files)?;
    Ok(summary(&scenario, &out.runs))
}

/// Solves the assignment with `solver`; the random solver uses the
/// assignment stream of `seed`, as the simulator does.
pub fn solve(scenario: &Scenario, solver: Solver, limit: u128, seed: u64) -> Result<Assignment, FairshareError> {
    let (g, apps) = (scenario.graph(), scenario.apps());
    match solver {
        Solver::Greedy => qwap_greedy(g, apps),
        Solver::Random => qwap_random(g, apps, &mut rng::stream(seed, rng::ASSIGNMENT_STREAM)),
        Solver::Exhaustive => qwap_exhaustive(g, apps, limit),
    }
}

pub fn cmd_assign(args: &AssignArgs) -> Result<String, CliError> {
    let overrides = Overrides {
        seed: args.seed,
        ..Overrides::default()
    };
    let scenario = load_scenario(&args.config, &overrides)?;
    let limit = args.limit.unwrap_or(u128::from(scenario.sim().exhaustive_limit));
    let assignment = solve(&scenario, args.solver, limit, scenario.sim().seed)?;
    let rates = predicted_app_rates(scenario.graph(), scenario.apps(), &assignment).map_err(FairshareError::from)?;
    let score = FairnessScore::from_rates(&rates);
    let weighted: Vec<f64> = rates.iter().map(|r| r.weighted).collect();
    let jain = jain_index(&weighted).ok();
    let solver = args
        .solver
        .to_possible_value()
        .expect("named solver")
        .get_name()
        .to_string();

    let workers_of = |app| -> Vec<String> { assignment.workers(app).iter().map(ToString::to_string).collect() };
    Ok(match args.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = scenario
                .apps()
                .iter()
                .zip(&rates)
                .map(|(app, r)| {
                    vec![
                        app.id.to_string(),
                        solver.clone(),
                        workers_of(app.id).join(";"),
                        fmt_num(r.delivered),
                        fmt_num(r.weighted),
                        fmt_num(score.min()),
                        jain.map_or_else(|| output::NA.to_string(), fmt_num),
                    ]
                })
                .collect();
            to_csv(
                &[
                    "app_id",
                    "solver",
                    "workers",
                    "predicted_rate",
                    "weighted_rate",
                    "min_weighted_rate",
                    "jain_weighted",
                ],
                &rows,
            )
        }
        Format::Text => {
            let mut s = format!("solver: {solver}\n");
            for (app, r) in scenario.apps().iter().zip(&rates) {
                let _ = writeln!(
                    s,
                    "app {}: workers [{}]  rate {}  weighted {}",
                    app.id,
                    workers_of(app.id).join(", "),
                    fmt_num(r.delivered),
                    fmt_num(r.weighted)
                );
            }
            let _ = writeln!(s, "min weighted rate: {}", fmt_num(score.min()));
            let _ = writeln!(
                s,
                "jain (weighted rates): {}",
                jain.map_or_else(|| output::NA.to_string(), fmt_num)
            );
            s
        }
    })
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    let base = spec_from_value(read_json(&args.config)?)?;
    let path = resolve_parameter(&args.param);
    let mut per_app = Vec::new();
    let mut global = Vec::new();
    let mut edges = 0;
    let mut s = String::new();
    for raw in &args.values {
        let spec = set_parameter(&base, &path, raw)?;
        let scenario = validate_spec(&spec)?;
        edges = scenario.graph().link_count();
        let out = simulate(&scenario, false)?;
        per_app.extend(per_app_csv(&out.runs, Some(raw)));
        global.extend(global_csv(&out.runs, Some(raw)));
        let _ = writeln!(s, "{path} = {raw}");
        s.push_str(&summary(&scenario, &out.runs));
    }
    let mut app_header = vec!["sweep_value"];
    app_header.extend(output::PER_APP_HEADER);
    let mut global_header = vec!["sweep_value".to_string()];
    global_header.extend(output::global_header(edges));
    write_outputs(
        &args.output_dir,
        &[
            ("sweep_per_app.csv", to_csv(&app_header, &per_app)),
            ("sweep_global.csv", to_csv(&global_header, &global)),
        ],
    )?;
    Ok(s)
}

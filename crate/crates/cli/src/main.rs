//! `lotsize`: generate instances, build scenario trees, solve the stochastic
//! models, run progressive hedging, evaluate plans and aggregate reports.
//!
//! Every command writes JSON or CSV. Outputs carry a `command` record with
//! the full argument list and a `timing` block holding all wall-clock
//! fields, so two runs with the same flags differ only inside `timing`.
//! Failures print a JSON error record on stderr and exit with status 1
//! (2 for usage errors).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lotsize", version, about = "Stochastic lot sizing with setup carry-over")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Benchmark instance generation.
    Gen {
        #[command(subcommand)]
        action: GenAction,
    },
    /// Scenario tree construction.
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Solve the compact, implicit or partial model, or an LP file.
    Solve(SolveArgs),
    /// Progressive hedging.
    Ph {
        #[command(subcommand)]
        action: PhAction,
    },
    /// Score a setup plan on the full tree.
    Evaluate(EvaluateArgs),
    /// Group run records by utilization, demand type and lambda.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum GenAction {
    /// Write the 96-instance grid and a manifest to a directory.
    Suite(GenSuiteArgs),
}

#[derive(Debug, Args)]
struct GenSuiteArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "suite")]
    out: PathBuf,
    /// Four-item structures instead of the ten-item ones.
    #[arg(long)]
    tiny: bool,
    /// Planning horizon; defaults to 7 (3 with --tiny).
    #[arg(long)]
    periods: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum TreeAction {
    /// Sample a full tree from an instance's mean demands.
    Build(TreeBuildArgs),
}

#[derive(Debug, Args)]
struct TreeBuildArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    branching: usize,
    /// Must match the instance horizon when given.
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tree.json")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Compact,
    Implicit,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CarryOverArg {
    Exact,
    AtMostOne,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, required_unless_present = "model")]
    instance: Option<PathBuf>,
    #[arg(long, required_unless_present = "model")]
    tree: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Implicit)]
    mode: Mode,
    /// Solve this LP file instead of building a model.
    #[arg(long, conflicts_with_all = ["instance", "tree"])]
    model: Option<PathBuf>,
    /// Number of sampled paths for `--mode partial`.
    #[arg(long)]
    paths: Option<usize>,
    /// Path-sampling seed for `--mode partial`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = CarryOverArg::Exact)]
    carry_over: CarryOverArg,
    /// `builtin` or `external`; defaults to $LOTSIZE_BACKEND, then builtin.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    mip_gap: Option<f64>,
    /// Also write the model in LP format.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    /// Write `name value` lines of the solution.
    #[arg(long)]
    solution_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PhAction {
    /// Run progressive hedging on the full tree or a sampled subset.
    Run(PhRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConsensusArg {
    Average,
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct PhRunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    /// Sample this many paths instead of using the full tree.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = ConsensusArg::Average)]
    consensus: ConsensusArg,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    adjustments: Switch,
    /// Concurrent subproblem solves; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, value_enum, default_value_t = CarryOverArg::Exact)]
    carry_over: CarryOverArg,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "ph_report.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    /// A plan file, or any `solve`/`ph run` output holding a `plan`.
    #[arg(long)]
    plan: PathBuf,
    /// `solve` output whose objective is the reference cost.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Suite manifest, used to look up utilization and demand type.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CarryOverArg::Exact)]
    carry_over: CarryOverArg,
    #[arg(long)]
    backend: Option<String>,
    /// CSV with one row per evaluated plan.
    #[arg(long, default_value = "costs.csv")]
    out: PathBuf,
    /// Also write a run record for `report`; needs `--reference`.
    #[arg(long, requires = "reference")]
    record_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run-record JSON files (a single record or a list each).
    #[arg(required = true)]
    records: Vec<PathBuf>,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            output::print_error(
                "usage",
                e.render().to_string().trim(),
                "run `lotsize <command> --help` for the accepted flags",
            );
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, hint) = output::classify(&e);
            output::print_error(kind, &output::describe(&e), hint);
            ExitCode::from(1)
        }
    }
}

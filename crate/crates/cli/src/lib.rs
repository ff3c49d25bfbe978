//! Command-line harness: `abc <run|oracle|summarize> [flags]`.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! run fails at runtime. Diagnostics go to stderr; data goes to files.

pub mod oracle;
pub mod run;
pub mod summarize;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use run::{resolve_run_config, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "abc", version, about = "Decentralized MCTS teams improved by behavioral cloning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the generation pipeline on a domain configuration.
    Run(RunArgs),
    /// Check the solver, planner and network against exact oracles.
    Oracle(OracleArgs),
    /// Merge the summaries of finished runs into one CSV file.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Domain configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Number of updated generations after the baseline.
    #[arg(long)]
    pub generations: Option<u32>,
    /// Episodes simulated per generation.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// UCT iterations per decision.
    #[arg(long = "uct-iters")]
    pub uct_iters: Option<usize>,
    /// Exploration constant C; the bonus at step t is C * (H - t).
    #[arg(long)]
    pub exploration: Option<f64>,
    #[arg(long = "sparse-limit")]
    pub sparse_limit: Option<usize>,
    /// Simulated reward bonus for the planner's own task removals.
    #[arg(long = "diy-bonus")]
    pub diy_bonus: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to $ABC_RESULTS_DIR (or ./results) joined with a run id.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Desk-scale preset: 2000 UCT iterations and 50 episodes unless given explicitly.
    #[arg(long)]
    pub fast: bool,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    /// Train on all generations' episodes instead of only the latest.
    #[arg(long = "cumulative-history")]
    pub cumulative_history: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value_t = oracle::Suite::All)]
    pub suite: oracle::Suite,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Run directories, each holding a summary.csv.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Combined CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (program name first) and executes the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run(args) => run::execute(&args),
        Command::Oracle(args) => oracle::execute(args.suite, args.seed),
        Command::Summarize(args) => summarize::execute(&args.runs, &args.out),
    }
}

pub(crate) fn exit_code(e: &abc_core::Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

mod kbc_cmd;
mod path_cmd;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "irn", version, about = "Implicit reasoning networks for knowledge base completion and path synthesis")]
struct Cli {
    /// Seed for initialisation, sampling and shuffling.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Worker threads for evaluation and gradient fan-out (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Structured JSON metrics report.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a KBC model and save the best checkpoint.
    TrainKbc(kbc_cmd::TrainArgs),
    /// Filtered MR and Hits@10 of a checkpoint (or a fresh model).
    EvalKbc(kbc_cmd::EvalArgs),
    /// Per-step inference trace for one query.
    Trace(kbc_cmd::TraceArgs),
    /// Top relations per memory cell by average attention.
    MemoryReport(kbc_cmd::MemoryArgs),
    /// Finite-difference gradient check on a toy model.
    Gradcheck(kbc_cmd::GradcheckArgs),
    /// Generate a shortest-path world and its instance splits.
    GenPaths(path_cmd::GenArgs),
    /// Train the path model on a generated world.
    TrainPaths(path_cmd::TrainArgs),
    /// Score path predictions of a checkpoint or the unweighted baseline.
    EvalPaths(path_cmd::EvalArgs),
}

/// KBC model shape flags shared by several commands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Maximum inference steps.
    #[arg(long, default_value_t = 5)]
    t_max: usize,
    /// Number of memory cells |M|.
    #[arg(long, default_value_t = 64)]
    memory_size: usize,
    #[arg(long, default_value_t = 200)]
    memory_dim: usize,
    #[arg(long, default_value_t = 100)]
    entity_dim: usize,
    #[arg(long, default_value_t = 100)]
    relation_dim: usize,
    /// Sharpness of the L1-distance candidate distribution.
    #[arg(long, default_value_t = 5.0)]
    gamma: f64,
    /// Sharpness of the cosine memory attention.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.08)]
    init_scale: f64,
}

pub struct Globals {
    pub seed: u64,
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let g = Globals {
        seed: cli.seed,
        report: cli.report,
    };
    let result = match cli.command {
        Command::TrainKbc(a) => kbc_cmd::train(&g, a),
        Command::EvalKbc(a) => kbc_cmd::eval(&g, a),
        Command::Trace(a) => kbc_cmd::trace(&g, a),
        Command::MemoryReport(a) => kbc_cmd::memory(&g, a),
        Command::Gradcheck(a) => kbc_cmd::gradcheck(&g, a),
        Command::GenPaths(a) => path_cmd::gen(&g, a),
        Command::TrainPaths(a) => path_cmd::train(&g, a),
        Command::EvalPaths(a) => path_cmd::eval(&g, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

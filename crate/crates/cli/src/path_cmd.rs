use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use irn_core::eval::MetricRecord;
use irn_core::paths::{
    build_dataset, build_dataset_all, dp_baseline, evaluate_paths, generate_world, load_path_model, read_world,
    save_path_model, train_paths, write_world, DatasetSizes, EdgeMode, PathConfig, PathLoss, PathTrainConfig,
};
use irn_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::{emit, log_config};
use crate::Globals;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    /// Each node links to its k nearest neighbours.
    Knn,
    /// n·k distinct uniformly random directed edges.
    Random,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    /// Out-degree of the neighbour graph.
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Mode::Knn)]
    mode: Mode,
    /// Split sizes; when all are omitted every accepted instance is used,
    /// split 2:1:1.
    #[arg(long, requires_all = ["valid", "test"])]
    train: Option<usize>,
    #[arg(long, requires_all = ["train", "test"])]
    valid: Option<usize>,
    #[arg(long, requires_all = ["train", "valid"])]
    test: Option<usize>,
    /// Output directory for nodes.tsv, edges.tsv and instances.tsv.
    #[arg(long)]
    out: PathBuf,
}

pub fn gen(g: &Globals, a: GenArgs) -> Result<ExitCode> {
    let mode = match a.mode {
        Mode::Knn => EdgeMode::Knn,
        Mode::Random => EdgeMode::Random,
    };
    let graph = generate_world(a.nodes, a.k, g.seed, mode)?;
    let splits = match (a.train, a.valid, a.test) {
        (Some(train), Some(valid), Some(test)) => build_dataset(&graph, DatasetSizes { train, valid, test }, g.seed)?,
        _ => build_dataset_all(&graph, g.seed)?,
    };
    write_world(&a.out, &graph, &splits)?;
    log::info!("world written to {}", a.out.display());
    let records = vec![
        MetricRecord::new("nodes", "world", graph.num_nodes() as f64),
        MetricRecord::new("edges", "world", graph.num_edges() as f64),
        MetricRecord::new("instances", "train", splits.train.len() as f64),
        MetricRecord::new("instances", "valid", splits.valid.len() as f64),
        MetricRecord::new("instances", "test", splits.test.len() as f64),
    ];
    emit(&records, g.report.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Loss {
    /// Negative log of the mixture probability of the gold path.
    LogExpected,
    /// Negative mixture probability of the gold path.
    Expected,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory written by `gen-paths`.
    #[arg(long)]
    world: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    t_max: usize,
    #[arg(long, default_value_t = 64)]
    memory_size: usize,
    #[arg(long, default_value_t = 128)]
    memory_dim: usize,
    /// Symbol embedding width; the controller and decoder are twice this.
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    /// Global gradient norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_enum, default_value_t = Loss::LogExpected)]
    loss: Loss,
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<ExitCode> {
    let (graph, splits) = read_world(&a.world)?;
    let mut config = PathConfig::new(graph.num_nodes());
    config.embed_dim = a.embed_dim;
    config.decoder_dim = 2 * a.embed_dim;
    config.memory_size = a.memory_size;
    config.memory_dim = a.memory_dim;
    config.t_max = a.t_max;
    let cfg = PathTrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: g.seed,
        clip_norm: (a.clip > 0.0).then_some(a.clip),
        loss: match a.loss {
            Loss::LogExpected => PathLoss::LogExpected,
            Loss::Expected => PathLoss::Expected,
        },
        patience: a.patience,
    };
    log_config("train-paths", g.seed, &(&config, &cfg));
    let outcome = train_paths(config, &graph, &splits, &cfg)?;
    save_path_model(&a.out, &outcome.best, Some(&cfg), outcome.best_epoch)?;
    log::info!("best epoch {} saved to {}", outcome.best_epoch, a.out.display());
    let mut records = vec![MetricRecord::new("best_epoch", "train", outcome.best_epoch as f64)];
    if let Some(last) = outcome.log.last() {
        records.push(MetricRecord::new("final_loss", "train", last.mean_loss));
    }
    for (name, list) in [("valid", &splits.valid), ("test", &splits.test)] {
        if !list.is_empty() {
            let preds = outcome.best.predict_all(list)?;
            records.extend(path_records(name, &evaluate_paths(&graph, list, &preds)?));
        }
    }
    emit(&records, g.report.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn path_records(split: &str, e: &irn_core::paths::PathEval) -> Vec<MetricRecord> {
    vec![
        MetricRecord::new("instances", split, e.instances as f64),
        MetricRecord::new("valid", split, e.valid as f64),
        MetricRecord::new("correct", split, e.correct as f64),
        MetricRecord::new("valid_rate", split, e.valid_rate),
        MetricRecord::new("correct_rate", split, e.correct_rate),
    ]
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    world: PathBuf,
    /// Trained path model.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Score the shortest-hop baseline over observed training edges instead.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value = "test")]
    split: String,
    /// Print per-step decodes for the first N instances.
    #[arg(long, default_value_t = 0)]
    trace: usize,
    /// Pick the decoding step by sampling the termination gates rather than
    /// taking the most likely step.
    #[arg(long, requires = "checkpoint")]
    sampled: bool,
}

fn join(nodes: &[usize]) -> String {
    nodes.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<ExitCode> {
    let (graph, splits) = read_world(&a.world)?;
    let list = splits
        .split(&a.split)
        .ok_or_else(|| Error::Format(format!("unknown split `{}` (expected train, valid or test)", a.split)))?;
    if list.is_empty() {
        return Err(Error::Empty(format!("split `{}`", a.split)));
    }
    let preds = if a.baseline {
        dp_baseline(graph.num_nodes(), &splits.train, list)
    } else {
        let path = a.checkpoint.as_ref().expect("clap enforces checkpoint or baseline");
        let model = load_path_model(path)?;
        if model.config.n_nodes != graph.num_nodes() {
            return Err(Error::Dimension {
                table: "symbols".into(),
                found: model.config.n_nodes,
                expected: graph.num_nodes(),
            });
        }
        log_config("eval-paths", g.seed, &model.config);
        for inst in list.iter().take(a.trace) {
            let (_, steps) = model.decode_all_steps(inst.start, inst.end)?;
            println!("# {} -> {}  gold: {}", inst.start, inst.end, join(&inst.path));
            for s in steps {
                println!(
                    "#   step {} gate {:.4} weight {:.4}: {}{}",
                    s.step,
                    s.gate_prob,
                    s.weight,
                    join(&s.nodes),
                    if s.terminated { "" } else { " (cut)" }
                );
            }
        }
        if a.sampled {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            list.iter()
                .map(|i| model.predict_sampled(i.start, i.end, &mut rng).map(|(_, p)| p))
                .collect::<Result<Vec<_>>>()?
        } else {
            model.predict_all(list)?
        }
    };
    let e = evaluate_paths(&graph, list, &preds)?;
    emit(&path_records(&a.split, &e), g.report.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

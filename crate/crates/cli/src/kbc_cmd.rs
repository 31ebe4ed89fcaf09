use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use irn_core::eval::{evaluate, memory_report, ranking_records, trace_inference, InputIndex, MetricRecord};
use irn_core::kbc::{toy_grad_check, KbcConfig, KbcModel};
use irn_core::kgdata::{augment_reverse, load_dataset, Direction, FilterIndex, Query, TripleStore, Vocab};
use irn_core::paths::model::toy_grad_check as path_grad_check;
use irn_core::paths::PathLoss;
use irn_core::trainer::{check_vocab, load_kbc, save_kbc, train_kbc, TrainConfig};
use irn_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::{emit, log_config};
use crate::{Globals, ModelArgs};

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Directory with train.txt, valid.txt and test.txt (tab-separated triples).
    #[arg(long, env = "IRN_DATA")]
    data: PathBuf,
    /// Do not add reverse relations and reversed training triples.
    #[arg(long)]
    no_reverse: bool,
}

impl DataArgs {
    fn load(&self) -> Result<(Vocab, TripleStore)> {
        let (vocab, store) = load_dataset(&self.data)?;
        log::info!(
            "loaded {}: {} entities, {} relations, {}/{}/{} triples",
            self.data.display(),
            vocab.num_entities(),
            vocab.num_relations(),
            store.train.len(),
            store.valid.len(),
            store.test.len()
        );
        if self.no_reverse {
            Ok((vocab, store))
        } else {
            let (store, vocab) = augment_reverse(&store, &vocab);
            Ok((vocab, store))
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the best checkpoint.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Sampled negative candidates per query.
    #[arg(long, default_value_t = 20)]
    negatives: usize,
    /// Global gradient norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    /// Stop after this many epochs without a validation improvement.
    #[arg(long)]
    patience: Option<usize>,
    /// Also keep output entity embeddings at unit norm.
    #[arg(long)]
    normalize_output: bool,
    /// Score at most this many validation triples per epoch.
    #[arg(long)]
    max_valid: Option<usize>,
}

fn model_config(m: &ModelArgs, vocab: &Vocab) -> KbcConfig {
    KbcConfig {
        num_entities: vocab.num_entities(),
        num_relations: vocab.num_relations(),
        entity_dim: m.entity_dim,
        relation_dim: m.relation_dim,
        memory_size: m.memory_size,
        memory_dim: m.memory_dim,
        t_max: m.t_max,
        lambda: m.lambda,
        gamma: m.gamma,
        init_scale: m.init_scale,
    }
}

fn split_records(model: &KbcModel, store: &TripleStore, filter: &FilterIndex, splits: &[&str]) -> Result<Vec<MetricRecord>> {
    let mut out = Vec::new();
    for &name in splits {
        let triples = store.split(name).unwrap_or(&[]);
        if triples.is_empty() {
            log::warn!("split `{name}` is empty; skipped");
            continue;
        }
        out.extend(ranking_records(name, &evaluate(model, store, triples, filter)?));
    }
    Ok(out)
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<ExitCode> {
    let (vocab, store) = a.data.load()?;
    let config = model_config(&a.model, &vocab);
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: g.seed,
        negatives: a.negatives,
        clip_norm: (a.clip > 0.0).then_some(a.clip),
        patience: a.patience,
        normalize_output_entities: a.normalize_output,
        max_valid_triples: a.max_valid,
    };
    log_config("train-kbc", g.seed, &(&config, &cfg));
    let outcome = train_kbc(config, &store, &cfg)?;
    save_kbc(&a.out, &outcome.best, Some(&cfg), outcome.best_epoch, Some(outcome.best_rng))?;
    log::info!("best epoch {} saved to {}", outcome.best_epoch, a.out.display());

    let filter = FilterIndex::build(&store);
    let mut records = vec![MetricRecord::new("best_epoch", "train", outcome.best_epoch as f64)];
    if let Some(last) = outcome.log.last() {
        records.push(MetricRecord::new("final_loss", "train", last.mean_loss));
    }
    records.extend(split_records(&outcome.best, &store, &filter, &["valid", "test"])?);
    emit(&records, g.report.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained model; without it a freshly initialised model is scored.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Shape of the fresh model when no checkpoint is given.
    #[command(flatten)]
    model: ModelArgs,
    /// Splits to score.
    #[arg(long, value_delimiter = ',', default_value = "valid,test")]
    splits: Vec<String>,
}

fn load_or_init(checkpoint: Option<&PathBuf>, m: &ModelArgs, vocab: &Vocab, seed: u64) -> Result<KbcModel> {
    let model = match checkpoint {
        Some(p) => load_kbc(p)?.model,
        None => {
            let config = model_config(m, vocab);
            log::info!("no checkpoint given; scoring a fresh model (seed {seed})");
            KbcModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed))?
        }
    };
    check_vocab(&model, vocab)?;
    Ok(model)
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<ExitCode> {
    let (vocab, store) = a.data.load()?;
    let model = load_or_init(a.checkpoint.as_ref(), &a.model, &vocab, g.seed)?;
    log_config("eval-kbc", g.seed, &model.config);
    for s in &a.splits {
        if store.split(s).is_none() {
            return Err(Error::Format(format!("unknown split `{s}` (expected train, valid or test)")));
        }
    }
    let names: Vec<&str> = a.splits.iter().map(String::as_str).collect();
    let records = split_records(&model, &store, &FilterIndex::build(&store), &names)?;
    if records.is_empty() {
        return Err(Error::Empty("every requested split".into()));
    }
    emit(&records, g.report.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    head: String,
    #[arg(long)]
    relation: String,
    /// Gold answer whose rank is tracked per step.
    #[arg(long)]
    tail: String,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn lookup(found: Option<usize>, kind: &str, name: &str) -> Result<usize> {
    found.ok_or_else(|| Error::Format(format!("unknown {kind} `{name}`")))
}

pub fn trace(_g: &Globals, a: TraceArgs) -> Result<ExitCode> {
    let (vocab, store) = a.data.load()?;
    let model = load_kbc(&a.checkpoint)?.model;
    check_vocab(&model, &vocab)?;
    let query = Query {
        subject: lookup(vocab.entity_id(&a.head), "entity", &a.head)?,
        relation: lookup(vocab.relation_id(&a.relation), "relation", &a.relation)?,
        object: lookup(vocab.entity_id(&a.tail), "entity", &a.tail)?,
        direction: Direction::Original,
    };
    let inputs = InputIndex::build(&model, &store.train)?;
    let tr = trace_inference(&model, &query, &inputs)?;
    if a.json {
        let json = serde_json::to_string_pretty(&tr).map_err(|e| Error::Format(e.to_string()))?;
        println!("{json}");
    } else {
        print!("{}", tr.render(&vocab));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct MemoryArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Relations listed per memory cell.
    #[arg(long, default_value_t = 8)]
    top_k: usize,
    /// Queries come from this split.
    #[arg(long, default_value = "train")]
    split: String,
}

pub fn memory(_g: &Globals, a: MemoryArgs) -> Result<ExitCode> {
    let (vocab, store) = a.data.load()?;
    let model = load_kbc(&a.checkpoint)?.model;
    check_vocab(&model, &vocab)?;
    let triples = store
        .split(&a.split)
        .ok_or_else(|| Error::Format(format!("unknown split `{}`", a.split)))?;
    if triples.is_empty() {
        return Err(Error::Empty(format!("split `{}`", a.split)));
    }
    let queries: Vec<Query> = if a.split == "train" {
        store.train_queries()
    } else {
        store.eval_queries(triples)
    };
    let report = memory_report(&model, &queries, a.top_k)?;
    print!("{}", report.render(&vocab));
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Check the path model instead of the KBC model.
    #[arg(long)]
    paths: bool,
}

pub fn gradcheck(g: &Globals, a: GradcheckArgs) -> Result<ExitCode> {
    let reports = if a.paths {
        vec![
            ("paths expected", path_grad_check(g.seed, PathLoss::Expected)?),
            ("paths log-expected", path_grad_check(g.seed, PathLoss::LogExpected)?),
        ]
    } else {
        vec![("kbc", toy_grad_check(g.seed)?)]
    };
    let mut ok = true;
    let mut records = Vec::new();
    for (name, r) in &reports {
        println!("# {name}");
        print!("{r}");
        records.push(MetricRecord::new("max_rel_error", name, r.max_rel_error()));
        ok &= r.passed();
    }
    emit(&records, g.report.as_deref())?;
    if ok {
        println!("gradient check passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradient check FAILED");
        Ok(ExitCode::from(2))
    }
}

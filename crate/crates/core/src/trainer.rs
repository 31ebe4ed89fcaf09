//! Minibatch SGD for the KBC model: unit-norm projection of input entity
//! embeddings, global gradient clipping, validation Hits@10 model
//! selection and checkpoint I/O.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RngState};
use crate::error::{Error, Result};
use crate::eval::{evaluate_queries, RankingResult};
use crate::kbc::{CandidateSet, KbcConfig, KbcModel};
use crate::kgdata::{shuffle, FilterIndex, Query, TripleStore, Vocab};
use crate::numcore::{normalize_row, Gradients, ParamId, ParamStore, Tape};

pub const KBC_KIND: &str = "kbc";

/// Queries per gradient tape. Fixed so that results do not depend on the
/// number of worker threads.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fresh uniform negatives per query and epoch.
    pub negatives: usize,
    /// Global L2 gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Also project output entity embeddings to unit norm.
    pub normalize_output_entities: bool,
    /// Cap on validation triples scored per epoch (first `n`).
    pub max_valid_triples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 100,
            seed: 1,
            negatives: 20,
            clip_norm: Some(5.0),
            patience: None,
            normalize_output_entities: false,
            max_valid_triples: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::contract("TrainConfig", d.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.negatives == 0 {
            return bad("batch size, epochs and negatives must be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip norm must be positive");
        }
        if self.patience == Some(0) {
            return bad("patience must be positive");
        }
        Ok(())
    }
}

/// `p ← p − lr·g` over every accumulated gradient, then rescales the
/// touched rows of each table in `unit_rows` to unit L2 norm.
pub fn sgd_step(params: &mut ParamStore, lr: f64, unit_rows: &[ParamId]) -> Result<()> {
    let ids: Vec<ParamId> = params.ids().collect();
    for &id in &ids {
        let p = params.get(id);
        let finite = if p.is_dense_touched() {
            p.grad.is_finite()
        } else {
            p.touched_rows()
                .iter()
                .all(|&r| p.grad.row(r).iter().all(|g| g.is_finite()))
        };
        if !finite {
            return Err(Error::NonFinite(format!("gradient of parameter `{}`", p.name)));
        }
    }
    for &id in &ids {
        let p = params.get_mut(id);
        let rows = p.touched_rows();
        let crate::numcore::Parameter { value, grad, .. } = p;
        for r in rows {
            for (v, g) in value.row_mut(r).iter_mut().zip(grad.row(r)) {
                *v -= lr * g;
            }
        }
    }
    for &id in unit_rows {
        let p = params.get_mut(id);
        for r in p.touched_rows() {
            normalize_row(p.value.row_mut(r));
        }
    }
    Ok(())
}

/// Rescales accumulated gradients so their global norm is at most `max`.
/// Returns the norm before clipping.
pub fn clip_gradients(params: &mut ParamStore, max: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max {
        params.scale_grads(max / norm);
    }
    norm
}

/// Mean-loss gradients of `batch`, accumulated into the parameter grads.
/// Returns the batch loss.
pub fn accumulate_batch(model: &mut KbcModel, batch: &[(Query, CandidateSet)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("accumulate_batch", "empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts = {
        let m = &*model;
        batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| -> Result<(f64, Option<Gradients>)> {
                let mut tape = Tape::new(&m.params);
                let loss = m.scaled_loss(&mut tape, chunk, scale)?;
                let v = tape.scalar(loss);
                if !v.is_finite() {
                    return Ok((v, None));
                }
                Ok((v, Some(tape.backward(loss)?)))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mut total = 0.0;
    for (v, grads) in parts {
        total += v;
        if let Some(g) = grads {
            model.params.accumulate(&g);
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub clipped_batches: usize,
    pub valid: Option<ValidScore>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidScore {
    pub hits_at_10: f64,
    pub mean_rank: f64,
}

pub struct TrainOutcome {
    /// Model at the epoch with the best validation Hits@10, or the last
    /// epoch when there is no validation split.
    pub best: KbcModel,
    pub best_epoch: usize,
    pub best_rng: RngState,
    pub log: Vec<EpochLog>,
}

/// Filter used for model selection: train and valid facts only.
pub fn validation_filter(store: &TripleStore) -> FilterIndex {
    let mut no_test = store.clone();
    no_test.test.clear();
    FilterIndex::build(&no_test)
}

/// Builds a model from `seed` and trains it.
pub fn train_kbc(model_config: KbcConfig, store: &TripleStore, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = KbcModel::new(model_config, &mut rng)?;
    train(model, store, cfg, &mut rng)
}

pub fn train(mut model: KbcModel, store: &TripleStore, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<TrainOutcome> {
    cfg.validate()?;
    if store.train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let ne = model.config.num_entities;
    let negatives = cfg.negatives.min(ne.saturating_sub(1));
    if negatives < cfg.negatives {
        log::warn!("only {ne} entities: using {negatives} negatives per query");
    }
    let mut unit_rows = vec![model.entity_in];
    if cfg.normalize_output_entities {
        unit_rows.push(model.entity_out);
    }

    let mut queries = store.train_queries();
    let valid_queries = {
        let n = cfg.max_valid_triples.unwrap_or(usize::MAX).min(store.valid.len());
        store.eval_queries(&store.valid[..n])
    };
    let filter = validation_filter(store);

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore, RngState)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        shuffle(&mut queries, rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut clipped = 0usize;
        for (b, chunk) in queries.chunks(cfg.batch_size).enumerate() {
            let batch = chunk
                .iter()
                .map(|q| CandidateSet::sampled(rng, q.object, negatives, ne).map(|c| (*q, c)))
                .collect::<Result<Vec<_>>>()?;
            model.params.zero_grads();
            let loss = accumulate_batch(&mut model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss {loss} at seed {}, epoch {epoch}, batch {b}",
                    cfg.seed
                )));
            }
            if let Some(c) = cfg.clip_norm {
                if clip_gradients(&mut model.params, c) > c {
                    clipped += 1;
                }
            }
            sgd_step(&mut model.params, cfg.learning_rate, &unit_rows)?;
            loss_sum += loss;
            batches += 1;
        }
        let mean_loss = loss_sum / batches as f64;

        let valid = if valid_queries.is_empty() {
            None
        } else {
            let r: RankingResult = evaluate_queries(&model, &valid_queries, &filter)?;
            Some(ValidScore {
                hits_at_10: r.hits_at_10,
                mean_rank: r.mean_rank,
            })
        };
        log::info!(
            "epoch {epoch}: loss {mean_loss:.6}{}",
            valid
                .map(|v| format!(", valid hits@10 {:.4}, MR {:.1}", v.hits_at_10, v.mean_rank))
                .unwrap_or_default()
        );
        log.push(EpochLog {
            epoch,
            mean_loss,
            clipped_batches: clipped,
            valid,
        });

        let score = valid.map_or(f64::NEG_INFINITY, |v| v.hits_at_10);
        let improved = match &best {
            None => true,
            Some((s, ..)) => score > *s || valid.is_none(),
        };
        if improved {
            best = Some((score, epoch, model.params.clone(), RngState::capture(rng)));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let (_, best_epoch, params, best_rng) = best.expect("at least one epoch ran");
    model.params = params;
    model.params.zero_grads();
    Ok(TrainOutcome {
        best: model,
        best_epoch,
        best_rng,
        log,
    })
}

// ---- checkpoints ----------------------------------------------------------

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(format!("cannot encode config: {e}")))
}

pub fn kbc_checkpoint(
    model: &KbcModel,
    train: Option<&TrainConfig>,
    epoch: usize,
    rng: Option<RngState>,
) -> Result<Checkpoint> {
    let train = train.map(to_json).transpose()?;
    Ok(Checkpoint::new(
        KBC_KIND,
        to_json(&model.config)?,
        train,
        epoch,
        rng,
        model.params.clone(),
    ))
}

pub fn save_kbc(
    path: impl AsRef<Path>,
    model: &KbcModel,
    train: Option<&TrainConfig>,
    epoch: usize,
    rng: Option<RngState>,
) -> Result<()> {
    kbc_checkpoint(model, train, epoch, rng)?.save(path)
}

pub struct LoadedKbc {
    pub model: KbcModel,
    pub train: Option<TrainConfig>,
    pub epoch: usize,
    pub rng: Option<RngState>,
}

pub fn kbc_from_checkpoint(c: Checkpoint) -> Result<LoadedKbc> {
    c.expect_kind(KBC_KIND)?;
    let config: KbcConfig = serde_json::from_value(c.header.model_config.clone())
        .map_err(|e| Error::Format(format!("bad model config: {e}")))?;
    let train = c
        .header
        .train_config
        .clone()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| Error::Format(format!("bad train config: {e}")))?;
    Ok(LoadedKbc {
        model: KbcModel::from_params(config, c.params)?,
        train,
        epoch: c.header.epoch,
        rng: c.header.rng,
    })
}

pub fn load_kbc(path: impl AsRef<Path>) -> Result<LoadedKbc> {
    kbc_from_checkpoint(Checkpoint::load(path)?)
}

/// Errors when the model's tables do not match the dataset vocabulary.
pub fn check_vocab(model: &KbcModel, vocab: &Vocab) -> Result<()> {
    let c = &model.config;
    if c.num_entities != vocab.num_entities() {
        return Err(Error::Dimension {
            table: "entity_in".into(),
            found: c.num_entities,
            expected: vocab.num_entities(),
        });
    }
    if c.num_relations != vocab.num_relations() {
        return Err(Error::Dimension {
            table: "relation".into(),
            found: c.num_relations,
            expected: vocab.num_relations(),
        });
    }
    Ok(())
}

//! IRN with a GRU sequence decoder for the shortest-path task.
//!
//! Symbols `0..n` are nodes, `n` is end-of-sequence and `n + 1` the
//! begin-of-sequence input. The controller starts from the concatenated
//! start and end embeddings; at every step `t` the decoder is initialised
//! with `s_t` and emits the full node path followed by end-of-sequence.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{evaluate_paths, Instance, PathEval, PathSplits};
use super::world::PathGraph;
use crate::checkpoint::{Checkpoint, RngState};
use crate::error::{Error, Result};
use crate::irn::{Irn, IrnConfig, MemoryView, StepTrace, Unrolled};
use crate::kgdata::shuffle;
use crate::numcore::{grad_check, init_uniform, GradCheckOptions, GradCheckReport, GruCell, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::trainer::{clip_gradients, sgd_step};

pub const PATHS_KIND: &str = "paths";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_nodes: usize,
    pub embed_dim: usize,
    /// Decoder GRU width; equals the controller width `2 · embed_dim`.
    pub decoder_dim: usize,
    pub memory_size: usize,
    pub memory_dim: usize,
    pub t_max: usize,
    pub lambda: f64,
    pub init_scale: f64,
    /// Greedy decoding emits at most this many nodes.
    pub max_decode_len: usize,
}

impl PathConfig {
    /// 64-dim symbols, 128-cell controller and decoder, 64 × 128 memory,
    /// `T_max` 5.
    pub fn new(n_nodes: usize) -> Self {
        PathConfig {
            n_nodes,
            embed_dim: 64,
            decoder_dim: 128,
            memory_size: 64,
            memory_dim: 128,
            t_max: 5,
            lambda: 10.0,
            init_scale: 0.08,
            max_decode_len: 2 * n_nodes,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.embed_dim
    }

    pub fn eos(&self) -> usize {
        self.n_nodes
    }

    pub fn bos(&self) -> usize {
        self.n_nodes + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 || self.embed_dim == 0 || self.max_decode_len == 0 {
            return Err(Error::contract("PathConfig", "sizes must be positive"));
        }
        if self.decoder_dim != self.state_dim() {
            return Err(Error::contract(
                "PathConfig",
                format!(
                    "decoder width {} must equal controller width {}",
                    self.decoder_dim,
                    self.state_dim()
                ),
            ));
        }
        Ok(())
    }

    fn irn_config(&self) -> IrnConfig {
        IrnConfig {
            state_dim: self.state_dim(),
            memory_size: self.memory_size,
            memory_dim: self.memory_dim,
            attention_dim: self.memory_dim,
            lambda: self.lambda,
            t_max: self.t_max,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathLoss {
    /// `−Σ_t w_t P_t(gold)`
    Expected,
    /// `−ln Σ_t w_t P_t(gold)`
    LogExpected,
}

#[derive(Clone, Debug)]
pub struct PathModel {
    pub config: PathConfig,
    pub params: ParamStore,
    pub irn: Irn,
    /// `(n + 2) × embed_dim`, shared by encoder and decoder inputs.
    pub symbols: ParamId,
    pub decoder: GruCell,
    /// `(n + 1) × decoder_dim`
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// One decoded sequence with its controller step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDecode {
    pub step: usize,
    pub gate_prob: f64,
    pub weight: f64,
    pub nodes: Vec<usize>,
    /// Whether end-of-sequence was emitted before the length cap.
    pub terminated: bool,
}

impl PathModel {
    pub fn new<R: Rng + ?Sized>(config: PathConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let s = config.init_scale;
        let mut params = ParamStore::new();
        let symbols = params.add(
            "symbols",
            init_uniform(rng, &[config.n_nodes + 2, config.embed_dim], s),
        );
        let irn = Irn::register(&mut params, "irn", config.irn_config(), rng)?;
        let decoder = GruCell::register(&mut params, "decoder", config.embed_dim, config.decoder_dim, s, rng);
        let out_w = params.add(
            "out_w",
            init_uniform(rng, &[config.n_nodes + 1, config.decoder_dim], s),
        );
        let out_b = params.add("out_b", Tensor::zeros(&[config.n_nodes + 1]));
        Ok(PathModel {
            config,
            params,
            irn,
            symbols,
            decoder,
            out_w,
            out_b,
        })
    }

    pub fn from_params(config: PathConfig, src: ParamStore) -> Result<Self> {
        let mut m = PathModel::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
        if src.len() != m.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                m.params.len(),
                src.len()
            )));
        }
        let ids: Vec<ParamId> = m.params.ids().collect();
        for id in ids {
            let name = m.params.get(id).name.clone();
            let sid = src
                .find(&name)
                .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))?;
            let want = m.params.value(id).shape().to_vec();
            let got = src.value(sid);
            if got.shape() != want.as_slice() {
                return Err(Error::Dimension {
                    table: name,
                    found: got.shape()[0],
                    expected: want[0],
                });
            }
            *m.params.value_mut(id) = got.clone();
        }
        Ok(m)
    }

    fn check_nodes(&self, nodes: &[usize]) -> Result<()> {
        match nodes.iter().find(|&&v| v >= self.config.n_nodes) {
            Some(v) => Err(Error::contract(
                "path model",
                format!("node {v} outside {} nodes", self.config.n_nodes),
            )),
            None => Ok(()),
        }
    }

    /// `s_1 = [emb(start) ; emb(end)]`
    pub fn encode(&self, tape: &mut Tape<'_>, start: usize, end: usize) -> Result<NodeId> {
        self.check_nodes(&[start, end])?;
        let a = tape.row(self.symbols, start);
        let b = tape.row(self.symbols, end);
        Ok(tape.concat(&[a, b]))
    }

    fn logits(&self, tape: &mut Tape<'_>, h: NodeId) -> NodeId {
        let w = tape.param(self.out_w);
        let b = tape.param(self.out_b);
        let z = tape.matvec(w, h);
        tape.add(z, b)
    }

    /// `ln P(gold | s)` under teacher forcing, gold = `path` then EOS.
    fn sequence_log_prob(&self, tape: &mut Tape<'_>, s: NodeId, inputs: &[NodeId], targets: &[usize]) -> NodeId {
        let mut h = s;
        let mut terms = Vec::with_capacity(targets.len());
        for (&x, &y) in inputs.iter().zip(targets) {
            h = self.decoder.step(tape, h, x);
            let z = self.logits(tape, h);
            let lp = tape.log_softmax(z);
            terms.push(tape.pick(lp, y));
        }
        let all = tape.concat(&terms);
        tape.sum(all)
    }

    /// Loss of one instance.
    pub fn instance_loss(&self, tape: &mut Tape<'_>, view: &MemoryView, inst: &Instance, loss: PathLoss) -> Result<NodeId> {
        self.check_nodes(&inst.path)?;
        if inst.path.is_empty() {
            return Err(Error::contract("instance_loss", "empty gold path"));
        }
        let s1 = self.encode(tape, inst.start, inst.end)?;
        let u = self.irn.unroll(tape, view, s1, self.config.t_max)?;
        let mut input_ids = Vec::with_capacity(inst.path.len() + 1);
        input_ids.push(self.config.bos());
        input_ids.extend_from_slice(&inst.path);
        let inputs: Vec<NodeId> = input_ids.iter().map(|&i| tape.row(self.symbols, i)).collect();
        let mut targets = inst.path.clone();
        targets.push(self.config.eos());
        self.mixture_loss(tape, &u, &inputs, &targets, loss)
    }

    fn mixture_loss(
        &self,
        tape: &mut Tape<'_>,
        u: &Unrolled,
        inputs: &[NodeId],
        targets: &[usize],
        loss: PathLoss,
    ) -> Result<NodeId> {
        let mut terms = Vec::with_capacity(u.states.len());
        for (t, &s) in u.states.iter().enumerate() {
            let lp = self.sequence_log_prob(tape, s, inputs, targets);
            terms.push(match loss {
                PathLoss::Expected => {
                    let p = tape.exp(lp);
                    tape.mul(u.weights[t], p)
                }
                PathLoss::LogExpected => tape.add(u.log_weights[t], lp),
            });
        }
        let all = tape.concat(&terms);
        Ok(match loss {
            PathLoss::Expected => {
                let r = tape.sum(all);
                tape.neg(r)
            }
            PathLoss::LogExpected => {
                let r = tape.log_sum_exp(all);
                tape.neg(r)
            }
        })
    }

    /// `scale · Σ` of instance losses on one tape.
    pub fn scaled_loss(&self, tape: &mut Tape<'_>, items: &[&Instance], scale: f64, loss: PathLoss) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::contract("path batch", "empty batch"));
        }
        let view = self.irn.memory_view(tape);
        let mut losses = Vec::with_capacity(items.len());
        for inst in items {
            losses.push(self.instance_loss(tape, &view, inst, loss)?);
        }
        let all = tape.concat(&losses);
        let total = tape.sum(all);
        Ok(tape.scale(total, scale))
    }

    /// Controller trace plus a greedy decode from every state.
    pub fn decode_all_steps(&self, start: usize, end: usize) -> Result<(StepTrace, Vec<StepDecode>)> {
        let mut tape = Tape::new(&self.params);
        let view = self.irn.memory_view(&mut tape);
        let s1 = self.encode(&mut tape, start, end)?;
        let u = self.irn.unroll(&mut tape, &view, s1, self.config.t_max)?;
        let trace = u.trace(&tape);
        let mut out = Vec::with_capacity(u.states.len());
        for (t, &s) in u.states.iter().enumerate() {
            let (nodes, terminated) = self.greedy(&mut tape, s);
            out.push(StepDecode {
                step: t + 1,
                gate_prob: trace.steps[t].gate_prob,
                weight: trace.steps[t].weight,
                nodes,
                terminated,
            });
        }
        Ok((trace, out))
    }

    fn greedy(&self, tape: &mut Tape<'_>, s: NodeId) -> (Vec<usize>, bool) {
        let eos = self.config.eos();
        let mut h = s;
        let mut token = self.config.bos();
        let mut nodes = Vec::new();
        while nodes.len() < self.config.max_decode_len {
            let x = tape.row(self.symbols, token);
            h = self.decoder.step(tape, h, x);
            let z = self.logits(tape, h);
            let v = tape.value(z).data();
            // First maximum wins ties.
            let mut best = 0;
            for (i, &x) in v.iter().enumerate() {
                if x > v[best] {
                    best = i;
                }
            }
            if best == eos {
                return (nodes, true);
            }
            nodes.push(best);
            token = best;
        }
        (nodes, false)
    }

    /// Greedy decode at the step with the largest mixture weight (earliest
    /// on ties).
    pub fn predict(&self, start: usize, end: usize) -> Result<Vec<usize>> {
        let mut tape = Tape::new(&self.params);
        let view = self.irn.memory_view(&mut tape);
        let s1 = self.encode(&mut tape, start, end)?;
        let u = self.irn.unroll(&mut tape, &view, s1, self.config.t_max)?;
        let mut best = 0;
        for t in 1..u.weights.len() {
            if tape.scalar(u.weights[t]) > tape.scalar(u.weights[best]) {
                best = t;
            }
        }
        Ok(self.greedy(&mut tape, u.states[best]).0)
    }

    /// Greedy decode at a stop step drawn from the termination gates.
    pub fn predict_sampled<R: Rng + ?Sized>(&self, start: usize, end: usize, rng: &mut R) -> Result<(usize, Vec<usize>)> {
        let mut tape = Tape::new(&self.params);
        let s1 = self.encode(&mut tape, start, end)?;
        let s1v = tape.value(s1).data().to_vec();
        let (t, trace) = self.irn.sample_inference(&self.params, &s1v, self.config.t_max, rng)?;
        let s = tape.constant_vec(trace.steps[t - 1].state.clone());
        Ok((t, self.greedy(&mut tape, s).0))
    }

    pub fn predict_all(&self, instances: &[Instance]) -> Result<Vec<Vec<usize>>> {
        instances.par_iter().map(|i| self.predict(i.start, i.end)).collect()
    }
}

// ---- training -------------------------------------------------------------

const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub loss: PathLoss,
    pub patience: Option<usize>,
}

impl Default for PathTrainConfig {
    fn default() -> Self {
        PathTrainConfig {
            learning_rate: 0.3,
            batch_size: 64,
            epochs: 40,
            seed: 1,
            clip_norm: Some(5.0),
            loss: PathLoss::LogExpected,
            patience: None,
        }
    }
}

impl PathTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::contract("PathTrainConfig", "need lr >= 0, batch > 0, epochs > 0"));
        }
        if self.patience == Some(0) || self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::contract("PathTrainConfig", "patience and clip norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid_correct: Option<usize>,
    pub valid_valid: Option<usize>,
}

pub struct PathTrainOutcome {
    pub best: PathModel,
    pub best_epoch: usize,
    pub best_rng: RngState,
    pub log: Vec<PathEpochLog>,
}

/// Mean-loss gradients of `batch` accumulated into the model grads.
pub fn accumulate_path_batch(model: &mut PathModel, batch: &[&Instance], loss: PathLoss) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let parts = {
        let m = &*model;
        batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut tape = Tape::new(&m.params);
                let l = m.scaled_loss(&mut tape, chunk, scale, loss)?;
                let v = tape.scalar(l);
                if !v.is_finite() {
                    return Ok((v, None));
                }
                Ok((v, Some(tape.backward(l)?)))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mut total = 0.0;
    for (v, g) in parts {
        total += v;
        if let Some(g) = g {
            model.params.accumulate(&g);
        }
    }
    Ok(total)
}

/// Longest gold path (in nodes) over `instances`.
pub fn longest_path(instances: &[Instance]) -> usize {
    instances.iter().map(|i| i.path.len()).max().unwrap_or(0)
}

/// Builds a model for `graph` and trains it; the decode cap is twice the
/// longest training path. Model selection uses validation correct counts.
pub fn train_paths(
    mut config: PathConfig,
    graph: &PathGraph,
    splits: &PathSplits,
    cfg: &PathTrainConfig,
) -> Result<PathTrainOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Empty("training paths".into()));
    }
    config.n_nodes = graph.num_nodes();
    config.max_decode_len = 2 * longest_path(&splits.train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = PathModel::new(config, &mut rng)?;
    let mut order: Vec<&Instance> = splits.train.iter().collect();
    let mut log = Vec::new();
    let mut best: Option<(i64, usize, ParamStore, RngState)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.params.zero_grads();
            let loss = accumulate_path_batch(&mut model, batch, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss {loss} at seed {}, epoch {epoch}, batch {b}",
                    cfg.seed
                )));
            }
            if let Some(c) = cfg.clip_norm {
                clip_gradients(&mut model.params, c);
            }
            sgd_step(&mut model.params, cfg.learning_rate, &[])?;
            loss_sum += loss;
            batches += 1;
        }
        let mean_loss = loss_sum / batches as f64;
        let valid = if splits.valid.is_empty() {
            None
        } else {
            let preds = model.predict_all(&splits.valid)?;
            Some(evaluate_paths(graph, &splits.valid, &preds)?)
        };
        log::info!(
            "epoch {epoch}: loss {mean_loss:.5}{}",
            valid
                .as_ref()
                .map(|v| format!(", valid correct {} valid {}", v.correct, v.valid))
                .unwrap_or_default()
        );
        log.push(PathEpochLog {
            epoch,
            mean_loss,
            valid_correct: valid.as_ref().map(|v| v.correct),
            valid_valid: valid.as_ref().map(|v| v.valid),
        });
        let score = valid.as_ref().map_or(i64::MIN, |v| v.correct as i64);
        let improved = match &best {
            None => true,
            Some((s, ..)) => valid.is_none() || score > *s,
        };
        if improved {
            best = Some((score, epoch, model.params.clone(), RngState::capture(&rng)));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let (_, best_epoch, params, best_rng) = best.expect("at least one epoch ran");
    model.params = params;
    model.params.zero_grads();
    Ok(PathTrainOutcome {
        best: model,
        best_epoch,
        best_rng,
        log,
    })
}

pub fn evaluate_model(model: &PathModel, graph: &PathGraph, instances: &[Instance]) -> Result<PathEval> {
    let preds = model.predict_all(instances)?;
    evaluate_paths(graph, instances, &preds)
}

// ---- checkpoints ----------------------------------------------------------

pub fn save_path_model(path: impl AsRef<Path>, model: &PathModel, train: Option<&PathTrainConfig>, epoch: usize) -> Result<()> {
    let enc = |e: serde_json::Error| Error::Format(format!("cannot encode config: {e}"));
    let mc = serde_json::to_value(&model.config).map_err(enc)?;
    let tc = train.map(serde_json::to_value).transpose().map_err(enc)?;
    Checkpoint::new(PATHS_KIND, mc, tc, epoch, None, model.params.clone()).save(path)
}

pub fn load_path_model(path: impl AsRef<Path>) -> Result<PathModel> {
    let c = Checkpoint::load(path)?;
    c.expect_kind(PATHS_KIND)?;
    let config: PathConfig = serde_json::from_value(c.header.model_config.clone())
        .map_err(|e| Error::Format(format!("bad model config: {e}")))?;
    PathModel::from_params(config, c.params)
}

/// Central-difference check of `loss` on a 5-node model with `T_max` 2
/// and one three-node gold path.
pub fn toy_grad_check(seed: u64, loss: PathLoss) -> Result<GradCheckReport> {
    let config = PathConfig {
        n_nodes: 5,
        embed_dim: 3,
        decoder_dim: 6,
        memory_size: 3,
        memory_dim: 4,
        t_max: 2,
        lambda: 10.0,
        init_scale: 0.4,
        max_decode_len: 6,
    };
    let model = PathModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let inst = Instance {
        start: 0,
        end: 3,
        path: vec![0, 2, 3],
    };
    let mut store = model.params.clone();
    grad_check(
        &mut store,
        |tape| model.scaled_loss(tape, &[&inst], 1.0, loss),
        &GradCheckOptions::default(),
    )
}

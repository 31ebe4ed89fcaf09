//! Knowledge-base completion head: the `[h; r]` encoder, the `tanh`
//! decoder, the L1-distance candidate distribution and the expected-reward
//! objective over the termination mixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irn::{Irn, IrnConfig, MemoryView, StepTrace, Unrolled};
use crate::kgdata::{sample_negatives, Direction, Query};
use crate::numcore::{
    grad_check, init_uniform, init_unit_rows_uniform, GradCheckOptions, GradCheckReport, NodeId, ParamId, ParamStore, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbcConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub memory_size: usize,
    pub memory_dim: usize,
    pub t_max: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub init_scale: f64,
}

impl KbcConfig {
    /// Full-size defaults: 100-dim embeddings, 64 × 200 memory, `T_max` 5,
    /// `λ` 10, `γ` 5.
    pub fn new(num_entities: usize, num_relations: usize) -> Self {
        KbcConfig {
            num_entities,
            num_relations,
            entity_dim: 100,
            relation_dim: 100,
            memory_size: 64,
            memory_dim: 200,
            t_max: 5,
            lambda: 10.0,
            gamma: 5.0,
            init_scale: 0.08,
        }
    }

    /// 5 entities, 2 relations, 8-dim embeddings, 4 × 16 memory, `T_max`
    /// 3; small enough for exhaustive finite-difference checks.
    pub fn toy() -> Self {
        KbcConfig {
            num_entities: 5,
            num_relations: 2,
            entity_dim: 8,
            relation_dim: 8,
            memory_size: 4,
            memory_dim: 16,
            t_max: 3,
            lambda: 10.0,
            gamma: 5.0,
            init_scale: 0.3,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.entity_dim + self.relation_dim
    }

    pub fn irn_config(&self) -> IrnConfig {
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

/// Candidate answers `D` with the gold entity's position in it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    ids: Vec<usize>,
    gold_index: usize,
}

impl CandidateSet {
    pub fn new(ids: Vec<usize>, gold: usize) -> Result<Self> {
        let gold_index = ids.iter().position(|&e| e == gold).ok_or_else(|| {
            Error::contract("CandidateSet", format!("gold entity {gold} not among candidates"))
        })?;
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("CandidateSet", "duplicate candidates"));
        }
        Ok(CandidateSet { ids, gold_index })
    }

    /// Gold followed by `n` fresh uniform negatives.
    pub fn sampled<R: Rng + ?Sized>(rng: &mut R, gold: usize, n: usize, num_entities: usize) -> Result<Self> {
        let mut ids = Vec::with_capacity(n + 1);
        ids.push(gold);
        ids.extend(sample_negatives(rng, gold, n, num_entities)?);
        Ok(CandidateSet { ids, gold_index: 0 })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn gold(&self) -> usize {
        self.ids[self.gold_index]
    }

    pub fn gold_index(&self) -> usize {
        self.gold_index
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Per-step values of a KBC forward pass over all entities.
#[derive(Clone, Debug)]
pub struct KbcTrace {
    pub steps: StepTrace,
    /// Decoder output `o_t` per step.
    pub outputs: Vec<Vec<f64>>,
    /// `p(· | o_t)` over all entities per step.
    pub step_scores: Vec<Vec<f64>>,
    /// `Σ_t w_t p(· | o_t)`
    pub scores: Vec<f64>,
}

/// Reasoning core plus the KBC encoder/decoder tables, with their values.
#[derive(Clone, Debug)]
pub struct KbcModel {
    pub config: KbcConfig,
    pub params: ParamStore,
    pub irn: Irn,
    /// Input entity embeddings, `|E| × entity_dim`, rows unit-norm.
    pub entity_in: ParamId,
    /// Output entity embeddings compared against decoder outputs.
    pub entity_out: ParamId,
    pub relation: ParamId,
    /// `entity_dim × state_dim`
    pub wo: ParamId,
    pub bo: ParamId,
}

impl KbcModel {
    pub fn new<R: Rng + ?Sized>(config: KbcConfig, rng: &mut R) -> Result<Self> {
        if config.num_entities == 0 || config.num_relations == 0 {
            return Err(Error::contract("KbcModel::new", "empty entity or relation vocabulary"));
        }
        if config.entity_dim == 0 || config.relation_dim == 0 {
            return Err(Error::contract("KbcModel::new", "embedding dimensions must be positive"));
        }
        let mut params = ParamStore::new();
        let s = config.init_scale;
        let entity_in = params.add(
            "entity_in",
            init_unit_rows_uniform(rng, config.num_entities, config.entity_dim),
        );
        let entity_out = params.add(
            "entity_out",
            init_uniform(rng, &[config.num_entities, config.entity_dim], s),
        );
        let relation = params.add(
            "relation",
            init_uniform(rng, &[config.num_relations, config.relation_dim], s),
        );
        let irn = Irn::register(&mut params, "irn", config.irn_config(), rng)?;
        let wo = params.add(
            "wo",
            init_uniform(rng, &[config.entity_dim, config.state_dim()], s),
        );
        let bo = params.add("bo", Tensor::zeros(&[config.entity_dim]));
        Ok(KbcModel {
            config,
            params,
            irn,
            entity_in,
            entity_out,
            relation,
            wo,
            bo,
        })
    }

    /// Rebuilds the parameter layout for `config` and takes values from
    /// `params`, which must hold every parameter by name with equal shape.
    pub fn from_params(config: KbcConfig, params: ParamStore) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = KbcModel::new(config, &mut rng)?;
        model.load_values(&params)?;
        Ok(model)
    }

    fn load_values(&mut self, src: &ParamStore) -> Result<()> {
        if src.len() != self.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                src.len()
            )));
        }
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let name = self.params.get(id).name.clone();
            let sid = src
                .find(&name)
                .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))?;
            let v = src.value(sid);
            let want = self.params.value(id).shape().to_vec();
            if v.shape() != want.as_slice() {
                return Err(Error::Dimension {
                    table: name,
                    found: v.shape()[0],
                    expected: want[0],
                });
            }
            *self.params.value_mut(id) = v.clone();
        }
        Ok(())
    }

    fn check_query(&self, q: &Query) -> Result<()> {
        let (ne, nr) = (self.config.num_entities, self.config.num_relations);
        if q.subject >= ne || q.object >= ne {
            return Err(Error::contract(
                "encode",
                format!("entity id out of range ({} / {}, {ne} entities)", q.subject, q.object),
            ));
        }
        if q.relation >= nr {
            return Err(Error::contract(
                "encode",
                format!("relation id {} out of range ({nr} relations)", q.relation),
            ));
        }
        Ok(())
    }

    /// `s_1 = [e_subject ; r_relation]`
    pub fn encode(&self, tape: &mut Tape<'_>, query: &Query) -> Result<NodeId> {
        self.check_query(query)?;
        let e = tape.row(self.entity_in, query.subject);
        let r = tape.row(self.relation, query.relation);
        Ok(tape.concat(&[e, r]))
    }

    /// `o = tanh(Wo s + bo)`
    pub fn decode(&self, tape: &mut Tape<'_>, s: NodeId) -> NodeId {
        let wo = tape.param(self.wo);
        let bo = tape.param(self.bo);
        let z = tape.matvec(wo, s);
        let z = tape.add(z, bo);
        tape.tanh(z)
    }

    /// `p(y | o) ∝ exp(−γ |o − y|₁)` over the rows of `candidates`.
    pub fn candidate_distribution(&self, tape: &mut Tape<'_>, o: NodeId, candidates: NodeId) -> NodeId {
        let d = tape.l1_dist_rows(candidates, o);
        let logits = tape.scale(d, -self.config.gamma);
        tape.softmax(logits)
    }

    /// `−Σ_t w_t p(y* | o_t)` for one unrolled query.
    pub fn objective(&self, tape: &mut Tape<'_>, unrolled: &Unrolled, candidates: &CandidateSet) -> Result<NodeId> {
        if let Some(&bad) = candidates.ids().iter().find(|&&e| e >= self.config.num_entities) {
            return Err(Error::contract("objective", format!("candidate {bad} out of range")));
        }
        let rows = tape.gather_rows(self.entity_out, candidates.ids());
        let mut terms = Vec::with_capacity(unrolled.states.len());
        for (t, &s) in unrolled.states.iter().enumerate() {
            let o = self.decode(tape, s);
            let p = self.candidate_distribution(tape, o, rows);
            let gold = tape.pick(p, candidates.gold_index());
            terms.push(tape.mul(unrolled.weights[t], gold));
        }
        let stacked = tape.concat(&terms);
        let reward = tape.sum(stacked);
        Ok(tape.neg(reward))
    }

    /// Loss of one query against its candidate set.
    pub fn query_loss(
        &self,
        tape: &mut Tape<'_>,
        view: &MemoryView,
        query: &Query,
        candidates: &CandidateSet,
    ) -> Result<NodeId> {
        let s1 = self.encode(tape, query)?;
        let u = self.irn.unroll(tape, view, s1, self.config.t_max)?;
        self.objective(tape, &u, candidates)
    }

    /// Mean loss over a batch.
    pub fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[(Query, CandidateSet)]) -> Result<NodeId> {
        self.scaled_loss(tape, batch, 1.0 / batch.len().max(1) as f64)
    }

    /// `scale · Σ` of the per-query losses in `items`.
    pub fn scaled_loss(&self, tape: &mut Tape<'_>, items: &[(Query, CandidateSet)], scale: f64) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::contract("batch_loss", "empty batch"));
        }
        let view = self.irn.memory_view(tape);
        let mut losses = Vec::with_capacity(items.len());
        for (q, c) in items {
            losses.push(self.query_loss(tape, &view, q, c)?);
        }
        let all = tape.concat(&losses);
        let total = tape.sum(all);
        Ok(tape.scale(total, scale))
    }

    /// Full forward pass against every entity.
    pub fn trace(&self, query: &Query) -> Result<KbcTrace> {
        let mut tape = Tape::new(&self.params);
        let view = self.irn.memory_view(&mut tape);
        let s1 = self.encode(&mut tape, query)?;
        let u = self.irn.unroll(&mut tape, &view, s1, self.config.t_max)?;
        let table = tape.param(self.entity_out);
        let ne = self.config.num_entities;
        let mut scores = vec![0.0; ne];
        let mut outputs = Vec::with_capacity(u.states.len());
        let mut step_scores = Vec::with_capacity(u.states.len());
        for (t, &s) in u.states.iter().enumerate() {
            let o = self.decode(&mut tape, s);
            let p = self.candidate_distribution(&mut tape, o, table);
            let w = tape.scalar(u.weights[t]);
            let pv = tape.value(p).data();
            for (acc, &pi) in scores.iter_mut().zip(pv) {
                *acc += w * pi;
            }
            outputs.push(tape.value(o).data().to_vec());
            step_scores.push(pv.to_vec());
        }
        Ok(KbcTrace {
            steps: u.trace(&tape),
            outputs,
            step_scores,
            scores,
        })
    }

    /// `score(y) = Σ_t w_t p(y | o_t)` with all entities in the normaliser.
    pub fn score_all_entities(&self, query: &Query) -> Result<Vec<f64>> {
        Ok(self.trace(query)?.scores)
    }

    /// Encoded `s_1` as plain values.
    pub fn encode_values(&self, query: &Query) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let s = self.encode(&mut tape, query)?;
        Ok(tape.value(s).data().to_vec())
    }
}

/// Central-difference check of the full batch objective on a
/// [`KbcConfig::toy`] model initialised from `seed`.
pub fn toy_grad_check(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = KbcModel::new(KbcConfig::toy(), &mut rng)?;
    let q = |subject, relation, object| Query {
        subject,
        relation,
        object,
        direction: Direction::Original,
    };
    let batch = vec![
        (q(0, 1, 2), CandidateSet::new(vec![2, 0, 4, 1], 2)?),
        (q(3, 0, 1), CandidateSet::new(vec![1, 3, 2], 1)?),
    ];
    let frozen = model.clone();
    grad_check(
        &mut model.params,
        |tape| frozen.batch_loss(tape, &batch),
        &GradCheckOptions::default(),
    )
}

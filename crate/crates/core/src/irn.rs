//! The task-agnostic reasoning machine: a shared global memory read by
//! cosine attention, a GRU controller that rewrites its state from the
//! attention readout, and a logistic termination gate.
//!
//! Training uses [`Irn::unroll`], which runs all `T_max` steps and returns
//! the probability `w_t = Π_{i<t}(1 − v_i) · v_t` of stopping exactly at
//! each step, with the gate forced to 1 at the final step. Inference can
//! instead sample a stopping step with [`Irn::sample_inference`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{init_uniform, init_unit_rows_gaussian, GruCell, NodeId, ParamId, ParamStore, Tape, Tensor};

/// Shape and hyperparameters of the reasoning core.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrnConfig {
    pub state_dim: usize,
    pub memory_size: usize,
    pub memory_dim: usize,
    /// Output size of the attention projections `W1`, `W2`.
    pub attention_dim: usize,
    /// Sharpness of the cosine attention.
    pub lambda: f64,
    pub t_max: usize,
    /// Matrices are initialised uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl IrnConfig {
    pub fn new(state_dim: usize, memory_size: usize, memory_dim: usize, t_max: usize) -> Self {
        IrnConfig {
            state_dim,
            memory_size,
            memory_dim,
            attention_dim: memory_dim,
            lambda: 10.0,
            t_max,
            init_scale: 0.08,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("state_dim", self.state_dim),
            ("memory_size", self.memory_size),
            ("memory_dim", self.memory_dim),
            ("attention_dim", self.attention_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::contract("IrnConfig", format!("{name} must be positive")));
            }
        }
        if self.t_max == 0 {
            return Err(Error::contract("IrnConfig", "t_max must be at least 1"));
        }
        Ok(())
    }
}

/// Parameter handles of the reasoning core.
#[derive(Clone, Debug)]
pub struct Irn {
    pub config: IrnConfig,
    /// `|M| × memory_dim`, rows unit-norm at initialisation.
    pub memory: ParamId,
    pub controller: GruCell,
    /// `attention_dim × memory_dim`
    pub w1: ParamId,
    /// `attention_dim × state_dim`
    pub w2: ParamId,
    /// `state_dim`
    pub wc: ParamId,
    /// scalar
    pub bc: ParamId,
}

/// Memory leaf and its projection `W1 m_i`, recorded once per tape.
#[derive(Clone, Copy, Debug)]
pub struct MemoryView {
    pub memory: NodeId,
    pub projected: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub weights: NodeId,
    pub readout: NodeId,
}

/// Tape nodes of a full unroll.
#[derive(Clone, Debug)]
pub struct Unrolled {
    /// `s_1 … s_T`
    pub states: Vec<NodeId>,
    /// Raw gate outputs `sigmoid(Wc s_t + bc)` for every step.
    pub gate_probs: Vec<NodeId>,
    /// Gate values used in the mixture; the last one is the constant 1.
    pub stop_probs: Vec<NodeId>,
    /// `w_t = Π_{i<t}(1 − v_i) v_t`
    pub weights: Vec<NodeId>,
    /// Attention at steps `1 … T−1`; the final state never reads memory.
    pub attention: Vec<Attention>,
    /// `ln w_t`, computed from gate logits so it stays finite when gates
    /// saturate.
    pub log_weights: Vec<NodeId>,
}

/// Plain values of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub gate_prob: f64,
    pub stop_prob: f64,
    pub weight: f64,
    /// Attention weights over memory cells, absent at the last step.
    pub attention: Option<Vec<f64>>,
    /// Attention readout `x_t`, absent at the last step.
    pub readout: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub steps: Vec<Step>,
}

impl StepTrace {
    pub fn weights(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.weight).collect()
    }
}

impl Unrolled {
    pub fn trace(&self, tape: &Tape<'_>) -> StepTrace {
        let steps = (0..self.states.len())
            .map(|t| Step {
                state: tape.value(self.states[t]).data().to_vec(),
                gate_prob: tape.scalar(self.gate_probs[t]),
                stop_prob: tape.scalar(self.stop_probs[t]),
                weight: tape.scalar(self.weights[t]),
                attention: self
                    .attention
                    .get(t)
                    .map(|a| tape.value(a.weights).data().to_vec()),
                readout: self
                    .attention
                    .get(t)
                    .map(|a| tape.value(a.readout).data().to_vec()),
            })
            .collect();
        StepTrace { steps }
    }
}

impl Irn {
    /// Registers the memory, controller, attention and gate parameters
    /// under `{prefix}.*`.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        config: IrnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let s = config.init_scale;
        let memory = store.add(
            format!("{prefix}.memory"),
            init_unit_rows_gaussian(rng, config.memory_size, config.memory_dim),
        );
        let controller = GruCell::register(
            store,
            &format!("{prefix}.controller"),
            config.memory_dim,
            config.state_dim,
            s,
            rng,
        );
        let w1 = store.add(
            format!("{prefix}.w1"),
            init_uniform(rng, &[config.attention_dim, config.memory_dim], s),
        );
        let w2 = store.add(
            format!("{prefix}.w2"),
            init_uniform(rng, &[config.attention_dim, config.state_dim], s),
        );
        let wc = store.add(format!("{prefix}.wc"), init_uniform(rng, &[config.state_dim], s));
        let bc = store.add(format!("{prefix}.bc"), Tensor::scalar(0.0));
        Ok(Irn {
            config,
            memory,
            controller,
            w1,
            w2,
            wc,
            bc,
        })
    }

    pub fn memory_view(&self, tape: &mut Tape<'_>) -> MemoryView {
        let memory = tape.param(self.memory);
        let w1 = tape.param(self.w1);
        let projected = tape.matmul_nt(memory, w1);
        MemoryView { memory, projected }
    }

    /// `a_i = softmax_i(λ cos(W1 m_i, W2 s))`, `x = Σ_i a_i m_i`.
    pub fn attend(&self, tape: &mut Tape<'_>, view: &MemoryView, s: NodeId) -> Attention {
        let w2 = tape.param(self.w2);
        let query = tape.matvec(w2, s);
        let cos = tape.cosine_rows(view.projected, query);
        let logits = tape.scale(cos, self.config.lambda);
        let weights = tape.softmax(logits);
        let readout = tape.weighted_row_sum(weights, view.memory);
        Attention { weights, readout }
    }

    /// `sigmoid(Wc · s + bc)`
    pub fn termination_prob(&self, tape: &mut Tape<'_>, s: NodeId) -> NodeId {
        let z = self.termination_logit(tape, s);
        tape.sigmoid(z)
    }

    /// `Wc·s + bc`
    pub fn termination_logit(&self, tape: &mut Tape<'_>, s: NodeId) -> NodeId {
        let wc = tape.param(self.wc);
        let bc = tape.param(self.bc);
        let z = tape.dot(wc, s);
        tape.add(z, bc)
    }

    /// Runs `t_max` controller steps from `s1`.
    pub fn unroll(&self, tape: &mut Tape<'_>, view: &MemoryView, s1: NodeId, t_max: usize) -> Result<Unrolled> {
        if t_max == 0 {
            return Err(Error::contract("unroll", "t_max must be at least 1"));
        }
        self.check_state(tape, s1, "unroll")?;
        let mut out = Unrolled {
            states: Vec::with_capacity(t_max),
            gate_probs: Vec::with_capacity(t_max),
            stop_probs: Vec::with_capacity(t_max),
            weights: Vec::with_capacity(t_max),
            attention: Vec::with_capacity(t_max - 1),
            log_weights: Vec::with_capacity(t_max),
        };
        let mut s = s1;
        let mut remaining = tape.constant_scalar(1.0);
        let mut log_remaining = tape.constant_scalar(0.0);
        for t in 1..=t_max {
            out.states.push(s);
            let logit = self.termination_logit(tape, s);
            let gate = tape.sigmoid(logit);
            out.gate_probs.push(gate);
            if t == t_max {
                out.stop_probs.push(tape.constant_scalar(1.0));
                out.weights.push(remaining);
                out.log_weights.push(log_remaining);
                break;
            }
            out.stop_probs.push(gate);
            let w = tape.mul(remaining, gate);
            out.weights.push(w);
            let cont = tape.one_minus(gate);
            remaining = tape.mul(remaining, cont);
            let log_stop = tape.log_sigmoid(logit);
            let lw = tape.add(log_remaining, log_stop);
            out.log_weights.push(lw);
            let neg = tape.neg(logit);
            let log_cont = tape.log_sigmoid(neg);
            log_remaining = tape.add(log_remaining, log_cont);

            let att = self.attend(tape, view, s);
            out.attention.push(att);
            s = self.controller.step(tape, s, att.readout);
        }
        Ok(out)
    }

    fn check_state(&self, tape: &Tape<'_>, s: NodeId, op: &'static str) -> Result<()> {
        let n = tape.value(s).len();
        if n != self.config.state_dim {
            return Err(Error::contract(
                op,
                format!("state has {n} entries, controller expects {}", self.config.state_dim),
            ));
        }
        Ok(())
    }

    // ---- value-level convenience wrappers -------------------------------

    /// Attention weights and readout for a concrete state.
    pub fn attend_values(&self, store: &ParamStore, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new(store);
        let sn = tape.constant_vec(s.to_vec());
        self.check_state(&tape, sn, "attend")?;
        let view = self.memory_view(&mut tape);
        let a = self.attend(&mut tape, &view, sn);
        Ok((
            tape.value(a.weights).data().to_vec(),
            tape.value(a.readout).data().to_vec(),
        ))
    }

    pub fn termination_value(&self, store: &ParamStore, s: &[f64]) -> Result<f64> {
        let mut tape = Tape::new(store);
        let sn = tape.constant_vec(s.to_vec());
        self.check_state(&tape, sn, "termination_prob")?;
        let v = self.termination_prob(&mut tape, sn);
        Ok(tape.scalar(v))
    }

    pub fn unroll_values(&self, store: &ParamStore, s1: &[f64], t_max: usize) -> Result<StepTrace> {
        let mut tape = Tape::new(store);
        let sn = tape.constant_vec(s1.to_vec());
        let view = self.memory_view(&mut tape);
        let u = self.unroll(&mut tape, &view, sn, t_max)?;
        Ok(u.trace(&tape))
    }

    /// Stochastic inference: at each step draw `u ∈ (0, 1]` and stop when
    /// `u ≤ P(stop | s_t)` or `t = t_max`. Returns the stopping step
    /// (1-based) and the steps visited.
    pub fn sample_inference<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        s1: &[f64],
        t_max: usize,
        rng: &mut R,
    ) -> Result<(usize, StepTrace)> {
        if t_max == 0 {
            return Err(Error::contract("sample_inference", "t_max must be at least 1"));
        }
        let mut tape = Tape::new(store);
        let mut s = tape.constant_vec(s1.to_vec());
        self.check_state(&tape, s, "sample_inference")?;
        let view = self.memory_view(&mut tape);
        let mut steps = Vec::new();
        let mut remaining = 1.0;
        for t in 1..=t_max {
            let gate = self.termination_prob(&mut tape, s);
            let v = tape.scalar(gate);
            let u: f64 = 1.0 - rng.random::<f64>();
            let stop = t == t_max || u <= v;
            let stop_prob = if t == t_max { 1.0 } else { v };
            let mut step = Step {
                state: tape.value(s).data().to_vec(),
                gate_prob: v,
                stop_prob,
                weight: remaining * stop_prob,
                attention: None,
                readout: None,
            };
            remaining *= 1.0 - stop_prob;
            if stop {
                steps.push(step);
                return Ok((t, StepTrace { steps }));
            }
            let att = self.attend(&mut tape, &view, s);
            step.attention = Some(tape.value(att.weights).data().to_vec());
            step.readout = Some(tape.value(att.readout).data().to_vec());
            steps.push(step);
            s = self.controller.step(&mut tape, s, att.readout);
        }
        unreachable!("loop always stops at t_max")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(t_max: usize, seed: u64) -> (ParamStore, Irn) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let cfg = IrnConfig::new(6, 4, 5, t_max);
        let irn = Irn::register(&mut store, "irn", cfg, &mut rng).unwrap();
        (store, irn)
    }

    #[test]
    fn log_weights_match_weights() {
        let (mut store, irn) = small(4, 5);
        for bc in [0.0, 3.0, -3.0] {
            *store.value_mut(irn.bc) = Tensor::scalar(bc);
            let mut tape = Tape::new(&store);
            let view = irn.memory_view(&mut tape);
            let s1 = tape.constant_vec(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2]);
            let u = irn.unroll(&mut tape, &view, s1, 4).unwrap();
            for (w, lw) in u.weights.iter().zip(&u.log_weights) {
                let (w, lw) = (tape.scalar(*w), tape.scalar(*lw));
                assert!((lw.exp() - w).abs() < 1e-14);
            }
        }
        *store.value_mut(irn.bc) = Tensor::scalar(800.0);
        let mut tape = Tape::new(&store);
        let view = irn.memory_view(&mut tape);
        let s1 = tape.constant_vec(vec![0.0; 6]);
        let u = irn.unroll(&mut tape, &view, s1, 4).unwrap();
        assert!(u.log_weights.iter().all(|&l| tape.scalar(l).is_finite()));
    }

    #[test]
    fn memory_rows_start_unit_norm() {
        let (store, irn) = small(3, 1);
        let m = store.value(irn.memory);
        for i in 0..m.rows() {
            let n: f64 = m.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cell_attention_is_that_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let irn = Irn::register(&mut store, "irn", IrnConfig::new(4, 1, 3, 2), &mut rng).unwrap();
        let (a, x) = irn.attend_values(&store, &[0.1, -0.3, 0.2, 0.9]).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(x, store.value(irn.memory).row(0).to_vec());
    }

    #[test]
    fn aligned_state_dominates_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let irn = Irn::register(&mut store, "irn", IrnConfig::new(2, 2, 2, 2), &mut rng).unwrap();
        *store.value_mut(irn.memory) = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        *store.value_mut(irn.w1) = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        *store.value_mut(irn.w2) = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let (a, _) = irn.attend_values(&store, &[3.0, 0.0]).unwrap();
        // softmax([10, 0])
        let expected = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((a[0] - expected).abs() < 1e-15);
        assert!(a[0] > 1.0 - 1e-3);
    }

    #[test]
    fn identical_memory_gives_uniform_attention() {
        let (mut store, irn) = small(3, 2);
        let row = store.value(irn.memory).row(0).to_vec();
        let m = store.value_mut(irn.memory);
        for i in 0..4 {
            m.row_mut(i).copy_from_slice(&row);
        }
        let (a, x) = irn.attend_values(&store, &[0.5, 0.1, -0.2, 0.3, 0.0, 1.0]).unwrap();
        for w in a {
            assert!((w - 0.25).abs() < 1e-15);
        }
        for (xi, ri) in x.iter().zip(&row) {
            assert!((xi - ri).abs() < 1e-15);
        }
    }

    #[test]
    fn termination_examples() {
        let (mut store, irn) = small(3, 4);
        let s = [0.3, -1.0, 0.2, 0.8, 0.0, 0.5];
        store.value_mut(irn.wc).data_mut().fill(0.0);
        assert_eq!(irn.termination_value(&store, &s).unwrap(), 0.5);
        store.value_mut(irn.bc).data_mut()[0] = 20.0;
        let v = irn.termination_value(&store, &s).unwrap();
        assert!((1.0 - v).abs() < 1e-8 && v < 1.0);
    }

    #[test]
    fn termination_matches_formula() {
        let (mut store, irn) = small(3, 5);
        store.value_mut(irn.bc).data_mut()[0] = -0.3;
        let s = [0.7, -0.2, 0.1, 0.4, -0.9, 0.05];
        let wc = store.value(irn.wc).data().to_vec();
        let z: f64 = wc.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() - 0.3;
        let want = 1.0 / (1.0 + (-z).exp());
        let got = irn.termination_value(&store, &s).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn t_max_one_has_no_memory_access() {
        let (store, irn) = small(1, 6);
        let tr = irn.unroll_values(&store, &[0.1; 6], 1).unwrap();
        assert_eq!(tr.weights(), vec![1.0]);
        assert!(tr.steps[0].attention.is_none());
        assert_eq!(tr.steps[0].stop_prob, 1.0);
    }

    #[test]
    fn half_gates_give_geometric_weights() {
        let (mut store, irn) = small(3, 7);
        store.value_mut(irn.wc).data_mut().fill(0.0);
        let tr = irn.unroll_values(&store, &[0.2; 6], 3).unwrap();
        assert_eq!(tr.weights(), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn zero_t_max_rejected() {
        let (store, irn) = small(3, 8);
        assert!(irn.unroll_values(&store, &[0.0; 6], 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(irn.sample_inference(&store, &[0.0; 6], 0, &mut rng).is_err());
        assert!(irn.unroll_values(&store, &[0.0; 5], 2).is_err());
    }

    #[test]
    fn saturated_gates_fix_the_stop_step() {
        let (mut store, irn) = small(4, 9);
        store.value_mut(irn.wc).data_mut().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        store.value_mut(irn.bc).data_mut()[0] = 800.0; // sigmoid == 1.0 exactly
        for _ in 0..50 {
            assert_eq!(irn.sample_inference(&store, &[0.1; 6], 4, &mut rng).unwrap().0, 1);
        }
        store.value_mut(irn.bc).data_mut()[0] = -800.0; // sigmoid == 0.0 exactly
        for _ in 0..50 {
            let (t, tr) = irn.sample_inference(&store, &[0.1; 6], 4, &mut rng).unwrap();
            assert_eq!(t, 4);
            assert_eq!(tr.steps.len(), 4);
        }
    }

    #[test]
    fn sampled_prefix_matches_unroll() {
        let (store, irn) = small(4, 10);
        let s1 = [0.3, 0.1, -0.4, 0.2, 0.9, -0.1];
        let full = irn.unroll_values(&store, &s1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (t, tr) = irn.sample_inference(&store, &s1, 4, &mut rng).unwrap();
            assert_eq!(tr.steps.len(), t);
            for (a, b) in tr.steps.iter().zip(&full.steps) {
                assert_eq!(a.state, b.state);
                assert_eq!(a.weight, b.weight);
            }
        }
    }
}

use rand::Rng;

use super::param::{init_uniform, ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Single-layer GRU cell:
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// n  = tanh(Wn x + Un (r ⊙ h) + bn)
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wn: ParamId,
    pub un: ParamId,
    pub bn: ParamId,
}

/// Gate activations of one step, for inspection.
#[derive(Clone, Debug)]
pub struct GruGates {
    pub update: NodeId,
    pub reset: NodeId,
    pub candidate: NodeId,
    pub output: NodeId,
}

impl GruCell {
    /// Registers the cell's weights as `{prefix}.wz` etc. Matrices are
    /// uniform in `[-scale, scale]`; biases start at zero.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let (i, h) = (input_size, hidden_size);
        let mut mat = |store: &mut ParamStore, name: &str, cols: usize| {
            store.add(format!("{prefix}.{name}"), init_uniform(rng, &[h, cols], scale))
        };
        let wz = mat(store, "wz", i);
        let uz = mat(store, "uz", h);
        let wr = mat(store, "wr", i);
        let ur = mat(store, "ur", h);
        let wn = mat(store, "wn", i);
        let un = mat(store, "un", h);
        let bz = store.add(format!("{prefix}.bz"), Tensor::zeros(&[h]));
        let br = store.add(format!("{prefix}.br"), Tensor::zeros(&[h]));
        let bn = store.add(format!("{prefix}.bn"), Tensor::zeros(&[h]));
        GruCell {
            input_size,
            hidden_size,
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wn,
            un,
            bn,
        }
    }

    pub fn params(&self) -> [ParamId; 9] {
        [
            self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wn, self.un, self.bn,
        ]
    }

    /// Records one step on `tape`. Panics on dimension mismatch; use
    /// [`gru_step`] for a checked evaluation.
    pub fn step(&self, tape: &mut Tape<'_>, h: NodeId, x: NodeId) -> NodeId {
        self.step_gates(tape, h, x).output
    }

    pub fn step_gates(&self, tape: &mut Tape<'_>, h: NodeId, x: NodeId) -> GruGates {
        let gate = |tape: &mut Tape<'_>, w: ParamId, u: ParamId, b: ParamId, hin: NodeId| {
            let (wn, un, bn) = (tape.param(w), tape.param(u), tape.param(b));
            let wx = tape.matvec(wn, x);
            let uh = tape.matvec(un, hin);
            let s = tape.add(wx, uh);
            tape.add(s, bn)
        };
        let za = gate(tape, self.wz, self.uz, self.bz, h);
        let z = tape.sigmoid(za);
        let ra = gate(tape, self.wr, self.ur, self.br, h);
        let r = tape.sigmoid(ra);
        let rh = tape.mul(r, h);
        let na = gate(tape, self.wn, self.un, self.bn, rh);
        let n = tape.tanh(na);
        let one_minus_z = tape.one_minus(z);
        let keep_new = tape.mul(one_minus_z, n);
        let keep_old = tape.mul(z, h);
        let output = tape.add(keep_new, keep_old);
        GruGates {
            update: z,
            reset: r,
            candidate: n,
            output,
        }
    }
}

/// Evaluates one GRU step outside of any training graph.
pub fn gru_step(store: &ParamStore, cell: &GruCell, state: &Tensor, input: &Tensor) -> Result<Tensor> {
    if state.len() != cell.hidden_size {
        return Err(Error::contract(
            "gru_step",
            format!("state has {} entries, hidden size is {}", state.len(), cell.hidden_size),
        ));
    }
    if input.len() != cell.input_size {
        return Err(Error::contract(
            "gru_step",
            format!("input has {} entries, input size is {}", input.len(), cell.input_size),
        ));
    }
    let mut tape = Tape::new(store);
    let h = tape.constant_vec(state.data().to_vec());
    let x = tape.constant_vec(input.data().to_vec());
    let out = cell.step(&mut tape, h, x);
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(input: usize, hidden: usize, scale: f64, seed: u64) -> (ParamStore, GruCell) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = GruCell::register(&mut store, "gru", input, hidden, scale, &mut rng);
        (store, c)
    }

    #[test]
    fn zero_weights_halve_state() {
        let (store, c) = cell(3, 4, 0.0, 1);
        let s = Tensor::vector(vec![1.0, -2.0, 0.5, 4.0]);
        let x = Tensor::vector(vec![9.0, -9.0, 3.0]);
        let out = gru_step(&store, &c, &s, &x).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 0.25, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let (store, c) = cell(3, 4, 0.1, 1);
        let bad_state = Tensor::vector(vec![0.0; 3]);
        let x = Tensor::vector(vec![0.0; 3]);
        assert!(matches!(
            gru_step(&store, &c, &bad_state, &x),
            Err(Error::Contract { .. })
        ));
        let s = Tensor::vector(vec![0.0; 4]);
        let bad_x = Tensor::vector(vec![0.0; 2]);
        assert!(gru_step(&store, &c, &s, &bad_x).is_err());
    }

    // Scalar-by-scalar evaluation written independently of the tape.
    fn oracle(store: &ParamStore, c: &GruCell, h: &[f64], x: &[f64]) -> Vec<f64> {
        let m = |id: ParamId, r: usize, col: usize| {
            let t = store.value(id);
            t.data()[r * t.cols() + col]
        };
        let b = |id: ParamId, r: usize| store.value(id).data()[r];
        let hs = c.hidden_size;
        let mut z = vec![0.0; hs];
        let mut r = vec![0.0; hs];
        for j in 0..hs {
            let mut za = b(c.bz, j);
            let mut ra = b(c.br, j);
            for (k, xk) in x.iter().enumerate() {
                za += m(c.wz, j, k) * xk;
                ra += m(c.wr, j, k) * xk;
            }
            for (k, hk) in h.iter().enumerate() {
                za += m(c.uz, j, k) * hk;
                ra += m(c.ur, j, k) * hk;
            }
            z[j] = sigmoid(za);
            r[j] = sigmoid(ra);
        }
        let mut out = vec![0.0; hs];
        for j in 0..hs {
            let mut na = b(c.bn, j);
            for (k, xk) in x.iter().enumerate() {
                na += m(c.wn, j, k) * xk;
            }
            for k in 0..hs {
                na += m(c.un, j, k) * r[k] * h[k];
            }
            let n = na.tanh();
            out[j] = (1.0 - z[j]) * n + z[j] * h[j];
        }
        out
    }

    #[test]
    fn matches_scalar_oracle() {
        let (mut store, c) = cell(4, 4, 0.8, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in [c.bz, c.br, c.bn] {
            for v in store.value_mut(id).data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = gru_step(&store, &c, &Tensor::vector(h.clone()), &Tensor::vector(x.clone())).unwrap();
        let want = oracle(&store, &c, &h, &x);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn gates_in_open_intervals() {
        let (store, c) = cell(5, 6, 0.5, 3);
        let mut tape = Tape::new(&store);
        let h = tape.constant_vec(vec![0.3, -0.7, 0.9, 0.0, 0.1, -0.2]);
        let x = tape.constant_vec(vec![1.0, 2.0, -1.0, 0.5, 0.0]);
        let g = c.step_gates(&mut tape, h, x);
        for id in [g.update, g.reset] {
            assert!(tape.value(id).data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(tape.value(g.candidate).data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let (store, c) = cell(4, 4, 0.1, 99);
            let s = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);
            let x = Tensor::vector(vec![-0.1, 0.5, 0.0, 1.0]);
            gru_step(&store, &c, &s, &x).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

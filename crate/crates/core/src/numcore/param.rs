use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{l2_norm, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    // Rows written since the last zero_grads when only row gradients arrived.
    touched_rows: BTreeSet<usize>,
    dense_touched: bool,
}

impl Parameter {
    fn new(name: String, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name,
            value,
            grad,
            touched_rows: BTreeSet::new(),
            dense_touched: false,
        }
    }

    /// Rows that received gradient since the last [`ParamStore::zero_grads`].
    /// A dense update marks every row.
    pub fn touched_rows(&self) -> Vec<usize> {
        if self.dense_touched {
            (0..self.value.rows()).collect()
        } else {
            self.touched_rows.iter().copied().collect()
        }
    }

    /// Whether a dense gradient arrived since the last zero.
    pub fn is_dense_touched(&self) -> bool {
        self.dense_touched
    }

    fn zero_grad(&mut self) {
        if self.dense_touched {
            self.grad.data_mut().fill(0.0);
        } else {
            for &r in &self.touched_rows {
                self.grad.row_mut(r).fill(0.0);
            }
        }
        self.touched_rows.clear();
        self.dense_touched = false;
    }
}

/// Gradient of one parameter produced by a backward pass.
#[derive(Clone, Debug)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// Gradients keyed by parameter, produced by [`crate::Tape::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) grads: BTreeMap<ParamId, ParamGrad>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&ParamGrad> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    /// Dense copy of the gradient of `id` (zeros when unreachable).
    pub fn dense(&self, id: ParamId, store: &ParamStore) -> Vec<f64> {
        let p = store.get(id);
        let mut out = vec![0.0; p.value.len()];
        match self.grads.get(&id) {
            None => {}
            Some(ParamGrad::Dense(g)) => out.copy_from_slice(g),
            Some(ParamGrad::Rows(rows)) => {
                let c = p.value.cols();
                for (&r, g) in rows {
                    out[r * c..(r + 1) * c].copy_from_slice(g);
                }
            }
        }
        out
    }

    pub(crate) fn add_dense(&mut self, id: ParamId, len: usize, g: &[f64], cols: usize) {
        let entry = self
            .grads
            .entry(id)
            .or_insert_with(|| ParamGrad::Dense(vec![0.0; len]));
        if let ParamGrad::Rows(rows) = entry {
            let mut dense = vec![0.0; len];
            for (&r, rg) in rows.iter() {
                dense[r * cols..(r + 1) * cols].copy_from_slice(rg);
            }
            *entry = ParamGrad::Dense(dense);
        }
        if let ParamGrad::Dense(d) = entry {
            for (a, b) in d.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub(crate) fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        let cols = g.len();
        let entry = self
            .grads
            .entry(id)
            .or_insert_with(|| ParamGrad::Rows(BTreeMap::new()));
        match entry {
            ParamGrad::Dense(d) => {
                for (a, b) in d[row * cols..(row + 1) * cols].iter_mut().zip(g) {
                    *a += b;
                }
            }
            ParamGrad::Rows(rows) => {
                let r = rows.entry(row).or_insert_with(|| vec![0.0; cols]);
                for (a, b) in r.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }

    /// Sum of squares over every stored gradient entry.
    pub fn sq_norm(&self) -> f64 {
        self.grads
            .values()
            .map(|g| match g {
                ParamGrad::Dense(d) => d.iter().map(|x| x * x).sum::<f64>(),
                ParamGrad::Rows(rows) => rows
                    .values()
                    .map(|r| r.iter().map(|x| x * x).sum::<f64>())
                    .sum(),
            })
            .sum()
    }
}

/// Ordered collection of named trainable parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Adds `grads` into the per-parameter gradient accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (&id, g) in &grads.grads {
            let p = &mut self.params[id.0];
            match g {
                ParamGrad::Dense(d) => {
                    for (a, b) in p.grad.data_mut().iter_mut().zip(d) {
                        *a += b;
                    }
                    p.dense_touched = true;
                }
                ParamGrad::Rows(rows) => {
                    for (&r, rg) in rows {
                        for (a, b) in p.grad.row_mut(r).iter_mut().zip(rg) {
                            *a += b;
                        }
                        p.touched_rows.insert(r);
                    }
                }
            }
        }
    }

    /// Scales every accumulated gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            if p.dense_touched {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
            } else {
                for &r in &p.touched_rows {
                    p.grad.row_mut(r).iter_mut().for_each(|g| *g *= factor);
                }
            }
        }
    }

    /// Global L2 norm of the accumulated gradients.
    pub fn grad_norm(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|g| g * g).sum::<f64>();
        self.params
            .iter()
            .map(|p| {
                if p.dense_touched {
                    sq(p.grad.data())
                } else {
                    p.touched_rows.iter().map(|&r| sq(p.grad.row(r))).sum()
                }
            })
            .sum::<f64>()
            .sqrt()
    }

    /// First parameter whose value or gradient contains NaN/Inf.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.params
            .iter()
            .find(|p| !p.value.is_finite() || !p.grad.is_finite())
            .map(|p| p.name.as_str())
    }

    /// Bitwise equality of names, shapes and values.
    pub fn same_values(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Uniform entries in `[-scale, scale]`.
pub fn init_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-scale..=scale);
    }
    t
}

/// Uniform entries, then each row rescaled to unit L2 norm.
pub fn init_unit_rows_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let mut t = init_uniform(rng, &[rows, cols], 1.0);
    normalize_rows(&mut t);
    t
}

/// Standard normal entries, then each row rescaled to unit L2 norm.
pub fn init_unit_rows_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    for v in t.data_mut() {
        *v = StandardNormal.sample(rng);
    }
    normalize_rows(&mut t);
    t
}

pub fn normalize_rows(t: &mut Tensor) {
    for r in 0..t.rows() {
        normalize_row(t.row_mut(r));
    }
}

/// Rescales `row` to unit norm; a zero row is left unchanged.
pub fn normalize_row(row: &mut [f64]) {
    let n = l2_norm(row);
    if n > 0.0 {
        row.iter_mut().for_each(|v| *v /= n);
    }
}

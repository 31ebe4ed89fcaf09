//! Reverse-mode differentiation over a linear record of vector primitives.
//!
//! A [`Tape`] borrows the [`ParamStore`] for the duration of one forward
//! pass. Every primitive appends a node; because a node can only refer to
//! nodes recorded before it, the record order is a topological order and
//! [`Tape::backward`] simply walks it in reverse. Parameter leaves do not
//! copy their values; gradients for them are returned as a [`Gradients`]
//! value which the caller folds into the store once the tape is dropped.

use super::param::{Gradients, ParamId, ParamStore};
use super::tensor::{dot, l2_norm, log_sigmoid, log_sum_exp, sigmoid, softmax_unchecked, Tensor, COSINE_EPS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise function paired with its derivative `d(x, y)` where `y = f(x)`.
#[derive(Clone, Copy)]
pub struct MapFn {
    pub name: &'static str,
    pub f: fn(f64) -> f64,
    pub df: fn(f64, f64) -> f64,
}

impl std::fmt::Debug for MapFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MapFn({})", self.name)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const,
    Param(ParamId),
    Row(ParamId, usize),
    GatherRows(ParamId, Vec<usize>),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    LogSigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Abs(NodeId),
    Map(NodeId, MapFn),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Pick(NodeId, usize),
    Concat(Vec<NodeId>),
    MatVec(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    CosineRows(NodeId, NodeId),
    WeightedRowSum(NodeId, NodeId),
    L1DistRows(NodeId, NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    LogSumExp(NodeId),
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
}

/// Record of one forward pass.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.value(*p),
        }
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.value(id).data()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, data: Vec<f64>, op: Op) -> NodeId {
        self.push(Tensor::vector(data), op)
    }

    fn same_len(&self, a: NodeId, b: NodeId, op: &str) {
        assert_eq!(
            self.value(a).len(),
            self.value(b).len(),
            "{op}: operand lengths differ"
        );
    }

    // ---- leaves ----------------------------------------------------------

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Const)
    }

    pub fn constant_vec(&mut self, v: Vec<f64>) -> NodeId {
        self.push_vec(v, Op::Const)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.push(Tensor::scalar(v), Op::Const)
    }

    /// Whole parameter as a leaf; no copy is made.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// One row of a parameter table as a vector.
    pub fn row(&mut self, id: ParamId, row: usize) -> NodeId {
        let v = self.params.value(id).row(row).to_vec();
        self.push_vec(v, Op::Row(id, row))
    }

    /// Selected rows of a parameter table stacked into a matrix.
    pub fn gather_rows(&mut self, id: ParamId, rows: &[usize]) -> NodeId {
        let table = self.params.value(id);
        let c = table.cols();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            data.extend_from_slice(table.row(r));
        }
        self.push(
            Tensor::matrix(rows.len(), c, data),
            Op::GatherRows(id, rows.to_vec()),
        )
    }

    // ---- elementwise -----------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b, "add");
        let v: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b, "sub");
        let v: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x - y).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b, "mul");
        let v: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v: Vec<f64> = self.data(a).iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), Op::Scale(a, c))
    }

    /// `a * s` where `s` is a single-element node.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let c = self.scalar(s);
        let v: Vec<f64> = self.data(a).iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), Op::ScaleBy(a, s))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v: Vec<f64> = self.data(a).iter().map(|x| x + c).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), Op::AddScalar(a))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v: Vec<f64> = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, v).unwrap(), op)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// `ln σ(x)`, finite for every finite `x`.
    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, log_sigmoid, Op::LogSigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// Absolute value; the subgradient at 0 is 0.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// User-supplied elementwise function with its own derivative.
    pub fn map(&mut self, a: NodeId, m: MapFn) -> NodeId {
        self.unary(a, m.f, Op::Map(a, m))
    }

    // ---- reductions and structure ---------------------------------------

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b, "dot");
        let s = dot(self.data(a), self.data(b));
        self.push(Tensor::scalar(s), Op::Dot(a, b))
    }

    /// Element `i` of `a` as a scalar node.
    pub fn pick(&mut self, a: NodeId, i: usize) -> NodeId {
        let v = self.data(a)[i];
        self.push(Tensor::scalar(v), Op::Pick(a, i))
    }

    /// Flattened concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(self.data(p));
        }
        self.push_vec(v, Op::Concat(parts.to_vec()))
    }

    /// `w x` with `w` of shape `[out, in]`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let wt = self.value(w);
        assert_eq!(wt.rank(), 2, "matvec: weight must be a matrix");
        let (rows, cols) = (wt.rows(), wt.cols());
        let xv = self.data(x);
        assert_eq!(cols, xv.len(), "matvec: {rows}x{cols} by {}", xv.len());
        let out: Vec<f64> = (0..rows).map(|r| dot(wt.row(r), xv)).collect();
        self.push_vec(out, Op::MatVec(w, x))
    }

    /// `a bᵀ` for `a: [n, d]`, `b: [m, d]`, giving `[n, m]`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (at, bt) = (self.value(a), self.value(b));
        assert_eq!(at.cols(), bt.cols(), "matmul_nt: inner dimensions differ");
        let (n, m) = (at.rows(), bt.rows());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let ai = at.row(i);
            for j in 0..m {
                out.push(dot(ai, bt.row(j)));
            }
        }
        self.push(Tensor::matrix(n, m, out), Op::MatMulNT(a, b))
    }

    /// Guarded cosine similarity of each row of `m` with `v`.
    pub fn cosine_rows(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (mt, vv) = (self.value(m), self.data(v));
        assert_eq!(mt.cols(), vv.len(), "cosine_rows: width mismatch");
        let nv = l2_norm(vv);
        let out: Vec<f64> = (0..mt.rows())
            .map(|i| {
                let r = mt.row(i);
                dot(r, vv) / (l2_norm(r) * nv).max(COSINE_EPS)
            })
            .collect();
        self.push_vec(out, Op::CosineRows(m, v))
    }

    /// `Σ_i w_i m_i` for weights `w: [k]` and rows of `m: [k, d]`.
    pub fn weighted_row_sum(&mut self, w: NodeId, m: NodeId) -> NodeId {
        let (wv, mt) = (self.data(w), self.value(m));
        assert_eq!(wv.len(), mt.rows(), "weighted_row_sum: row count mismatch");
        let mut out = vec![0.0; mt.cols()];
        for (i, &wi) in wv.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(mt.row(i)) {
                *o += wi * x;
            }
        }
        self.push_vec(out, Op::WeightedRowSum(w, m))
    }

    /// L1 distance of each row of `m` to `v`.
    pub fn l1_dist_rows(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (mt, vv) = (self.value(m), self.data(v));
        assert_eq!(mt.cols(), vv.len(), "l1_dist_rows: width mismatch");
        let out: Vec<f64> = (0..mt.rows())
            .map(|i| mt.row(i).iter().zip(vv).map(|(a, b)| (a - b).abs()).sum())
            .collect();
        self.push_vec(out, Op::L1DistRows(m, v))
    }

    /// `|a - b|₁` as a scalar.
    pub fn l1_distance(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.sub(a, b);
        let d = self.abs(d);
        self.sum(d)
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax_unchecked(self.data(a));
        self.push_vec(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let lse = log_sum_exp(self.data(a));
        let v = self.data(a).iter().map(|x| x - lse).collect();
        self.push_vec(v, Op::LogSoftmax(a))
    }

    pub fn log_sum_exp(&mut self, a: NodeId) -> NodeId {
        let s = log_sum_exp(self.data(a));
        self.push(Tensor::scalar(s), Op::LogSumExp(a))
    }

    // ---- backward --------------------------------------------------------

    /// Propagates `d loss / d node` back to every parameter leaf reachable
    /// from `loss`. Nodes recorded after `loss` are ignored.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {:?}", lv.shape()),
            ));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!("loss value {}", lv.item())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient at node {idx} ({})",
                    op_name(&self.nodes[idx].op)
                )));
            }
            let y = self.data(NodeId(idx));
            match &self.nodes[idx].op {
                Op::Const => {}
                Op::Param(p) => {
                    let t = self.params.value(*p);
                    out.add_dense(*p, t.len(), &g, t.cols());
                }
                Op::Row(p, r) => out.add_row(*p, *r, &g),
                Op::GatherRows(p, rows) => {
                    let c = g.len() / rows.len();
                    for (i, &r) in rows.iter().enumerate() {
                        out.add_row(*p, r, &g[i * c..(i + 1) * c]);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    acc(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.data(*a), self.data(*b));
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *b, &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::ScaleBy(a, s) => {
                    let c = self.scalar(*s);
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    let gs = dot(&g, self.data(*a));
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *s, &[gs]);
                }
                Op::AddScalar(a) => acc(&mut grads, *a, &g),
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::LogSigmoid(a) => {
                    let ga: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, &x)| g * sigmoid(-x)).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Log(a) => {
                    let ga: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, x)| g / x).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Abs(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(self.data(*a))
                        .map(|(g, &x)| g * sign(x))
                        .collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Map(a, m) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(self.data(*a))
                        .zip(y)
                        .map(|((g, &x), &y)| g * (m.df)(x, y))
                        .collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    acc(&mut grads, *a, &vec![g[0]; n]);
                }
                Op::Dot(a, b) => {
                    let ga: Vec<f64> = self.data(*b).iter().map(|x| x * g[0]).collect();
                    let gb: Vec<f64> = self.data(*a).iter().map(|x| x * g[0]).collect();
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *b, &gb);
                }
                Op::Pick(a, i) => {
                    let n = self.value(*a).len();
                    let slot = grads[a.0].get_or_insert_with(|| vec![0.0; n]);
                    slot[*i] += g[0];
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        acc(&mut grads, *p, &g[off..off + n]);
                        off += n;
                    }
                }
                Op::MatVec(w, x) => {
                    let wt = self.value(*w);
                    let xv = self.data(*x);
                    let (rows, cols) = (wt.rows(), wt.cols());
                    let mut gw = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let wr = wt.row(r);
                        let gwr = &mut gw[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            gwr[c] = gr * xv[c];
                            gx[c] += wr[c] * gr;
                        }
                    }
                    acc(&mut grads, *w, &gw);
                    acc(&mut grads, *x, &gx);
                }
                Op::MatMulNT(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (n, m, d) = (at.rows(), bt.rows(), at.cols());
                    let mut ga = vec![0.0; n * d];
                    let mut gb = vec![0.0; m * d];
                    for i in 0..n {
                        let ai = at.row(i);
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let bj = bt.row(j);
                            for l in 0..d {
                                ga[i * d + l] += gij * bj[l];
                                gb[j * d + l] += gij * ai[l];
                            }
                        }
                    }
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *b, &gb);
                }
                Op::CosineRows(m, v) => {
                    let (mt, vv) = (self.value(*m), self.data(*v));
                    let (k, d) = (mt.rows(), mt.cols());
                    let nv = l2_norm(vv);
                    let mut gm = vec![0.0; k * d];
                    let mut gv = vec![0.0; d];
                    for i in 0..k {
                        let r = mt.row(i);
                        let nr = l2_norm(r);
                        let prod = nr * nv;
                        let gi = g[i];
                        if prod > COSINE_EPS {
                            // c = r·v / (|r||v|)
                            let c = y[i];
                            for l in 0..d {
                                gm[i * d + l] += gi * (vv[l] / prod - c * r[l] / (nr * nr));
                                gv[l] += gi * (r[l] / prod - c * vv[l] / (nv * nv));
                            }
                        } else {
                            for l in 0..d {
                                gm[i * d + l] += gi * vv[l] / COSINE_EPS;
                                gv[l] += gi * r[l] / COSINE_EPS;
                            }
                        }
                    }
                    acc(&mut grads, *m, &gm);
                    acc(&mut grads, *v, &gv);
                }
                Op::WeightedRowSum(w, m) => {
                    let (wv, mt) = (self.data(*w), self.value(*m));
                    let d = mt.cols();
                    let gw: Vec<f64> = (0..mt.rows()).map(|i| dot(&g, mt.row(i))).collect();
                    let mut gm = vec![0.0; mt.len()];
                    for (i, &wi) in wv.iter().enumerate() {
                        for l in 0..d {
                            gm[i * d + l] = wi * g[l];
                        }
                    }
                    acc(&mut grads, *w, &gw);
                    acc(&mut grads, *m, &gm);
                }
                Op::L1DistRows(m, v) => {
                    let (mt, vv) = (self.value(*m), self.data(*v));
                    let d = mt.cols();
                    let mut gm = vec![0.0; mt.len()];
                    let mut gv = vec![0.0; d];
                    for i in 0..mt.rows() {
                        let r = mt.row(i);
                        for l in 0..d {
                            let s = g[i] * sign(r[l] - vv[l]);
                            gm[i * d + l] = s;
                            gv[l] -= s;
                        }
                    }
                    acc(&mut grads, *m, &gm);
                    acc(&mut grads, *v, &gv);
                }
                Op::Softmax(a) => {
                    let s = dot(&g, y);
                    let ga: Vec<f64> = g.iter().zip(y).map(|(g, y)| y * (g - s)).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(g, ly)| g - ly.exp() * total)
                        .collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::LogSumExp(a) => {
                    let p = softmax_unchecked(self.data(*a));
                    let ga: Vec<f64> = p.iter().map(|p| p * g[0]).collect();
                    acc(&mut grads, *a, &ga);
                }
            }
        }
        Ok(out)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, g: &[f64]) {
    match &mut grads[id.0] {
        Some(v) => {
            for (a, b) in v.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Const => "const",
        Op::Param(_) => "param",
        Op::Row(..) => "row",
        Op::GatherRows(..) => "gather_rows",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::ScaleBy(..) => "scale_by",
        Op::AddScalar(..) => "add_scalar",
        Op::Sigmoid(_) => "sigmoid",
        Op::LogSigmoid(_) => "log_sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Exp(_) => "exp",
        Op::Log(_) => "log",
        Op::Abs(_) => "abs",
        Op::Map(_, m) => m.name,
        Op::Sum(_) => "sum",
        Op::Dot(..) => "dot",
        Op::Pick(..) => "pick",
        Op::Concat(_) => "concat",
        Op::MatVec(..) => "matvec",
        Op::MatMulNT(..) => "matmul_nt",
        Op::CosineRows(..) => "cosine_rows",
        Op::WeightedRowSum(..) => "weighted_row_sum",
        Op::L1DistRows(..) => "l1_dist_rows",
        Op::Softmax(_) => "softmax",
        Op::LogSoftmax(_) => "log_softmax",
        Op::LogSumExp(_) => "log_sum_exp",
    }
}

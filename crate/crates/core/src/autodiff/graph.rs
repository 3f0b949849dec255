//! Tape-based reverse-mode differentiation over small dense arrays.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse from a scalar node and
//! returns the gradient of every parameter leaf that was read through
//! [`Graph::param`].
//!
//! Shapes are 1-d (`[n]`) or 2-d row-major (`[rows, cols]`). Shape errors
//! inside an op are programming errors and panic; the model layer validates
//! user-facing inputs before they reach the tape.

use std::collections::BTreeMap;
use std::rc::Rc;

use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Vec<Var>),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Pick(Var, usize),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    MaskedLogSoftmax(Var, Rc<[bool]>),
    WeightedSum { weights: Var, items: Vec<Var> },
    Row { table: Var, row: usize },
    Lstm { x: Var, h: Var, c: Var, w: Var, b: Var },
    BceWithLogits(Var, Vec<f64>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Pick(..) => "pick",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softmax(..) => "softmax",
            Op::MaskedLogSoftmax(..) => "masked_log_softmax",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Row { .. } => "embedding_row",
            Op::Lstm { .. } => "lstm_cell",
            Op::BceWithLogits(..) => "bce_with_logits",
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    // op-specific forward cache (LSTM gate activations)
    aux: Vec<f64>,
    op: Op,
}

/// Parameter gradients keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grads {
    grads: BTreeMap<String, Vec<f64>>,
}

impl Grads {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Sets the gradient of `name`, replacing any previous entry.
    pub fn insert(&mut self, name: impl Into<String>, grad: Vec<f64>) {
        self.grads.insert(name.into(), grad);
    }

    pub fn remove(&mut self, name: &str) -> Option<Vec<f64>> {
        self.grads.remove(name)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.grads.retain(|k, _| keep(k));
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &Grads) {
        for (name, g) in &other.grads {
            match self.grads.get_mut(name) {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => {
                    self.grads.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    non_finite: Option<&'static str>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if cfg!(debug_assertions) && self.non_finite.is_none() && !value.iter().all(|v| v.is_finite()) {
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node {
            shape,
            value,
            aux: Vec::new(),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.len(), 1, "scalar() on non-scalar node");
        value[0]
    }

    /// Errors with the name of the first op that produced a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        if let Some(op) = self.non_finite {
            return Err(Error::NonFinite { op });
        }
        for node in &self.nodes {
            if !node.value.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { op: node.op.name() });
            }
        }
        Ok(())
    }

    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "constant shape");
        self.push(shape, value, Op::Leaf)
    }

    pub fn vector(&mut self, value: Vec<f64>) -> Var {
        let n = value.len();
        self.push(vec![n], value, Op::Leaf)
    }

    /// A leaf bound to the named parameter; repeated reads share one node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t: &Tensor = store.tensor(name)?;
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// `a @ b` for `a: [m, n]` and `b: [n]` or `b: [n, p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert_eq!(sa.len(), 2, "matmul lhs must be 2-d, got {sa:?}");
        let (m, n) = (sa[0], sa[1]);
        assert_eq!(sb[0], n, "matmul inner dims: {sa:?} x {sb:?}");
        let p = if sb.len() == 2 { sb[1] } else { 1 };
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            if p == 1 {
                out[i] = row.iter().zip(bv).map(|(x, y)| x * y).sum();
            } else {
                let orow = &mut out[i * p..(i + 1) * p];
                for (k, &aik) in row.iter().enumerate() {
                    let brow = &bv[k * p..(k + 1) * p];
                    orow.iter_mut().zip(brow).for_each(|(o, b)| *o += aik * b);
                }
            }
        }
        let shape = if sb.len() == 2 { vec![m, p] } else { vec![m] };
        self.push(shape, out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(self.shape(a).to_vec(), out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push(self.shape(a).to_vec(), out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * factor).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, factor))
    }

    /// Elementwise sum of same-shaped nodes.
    pub fn sum(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "sum of nothing");
        let shape = self.shape(items[0]).to_vec();
        let mut out = vec![0.0; self.value(items[0]).len()];
        for &v in items {
            assert_eq!(self.shape(v), shape.as_slice(), "sum shapes");
            out.iter_mut().zip(self.value(v)).for_each(|(o, x)| *o += x);
        }
        self.push(shape, out, Op::Sum(items.to_vec()))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let ones = self.constant(vec![1, n], vec![1.0; n]);
        let flat = if self.shape(a).len() == 1 { a } else { self.concat(&[a]) };
        self.matmul(ones, flat)
    }

    /// Concatenation of 1-d nodes.
    pub fn concat(&mut self, items: &[Var]) -> Var {
        let mut out = Vec::new();
        for &v in items {
            out.extend_from_slice(self.value(v));
        }
        let n = out.len();
        self.push(vec![n], out, Op::Concat(items.to_vec()))
    }

    /// `a[start..start + len]` of a 1-d node.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a)[start..start + len].to_vec();
        self.push(vec![len], out, Op::Slice(a, start))
    }

    /// Entry `index` as a scalar node.
    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let out = vec![self.value(a)[index]];
        self.push(vec![1], out, Op::Pick(a, index))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(self.shape(a).to_vec(), out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        self.push(self.shape(a).to_vec(), out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax(self.value(a));
        self.push(self.shape(a).to_vec(), out, Op::Softmax(a))
    }

    /// Log-softmax restricted to `mask`; masked-out entries hold 0 and carry
    /// no gradient. At least one entry must be unmasked.
    pub fn masked_log_softmax(&mut self, a: Var, mask: Rc<[bool]>) -> Var {
        let out = masked_log_softmax(self.value(a), &mask);
        self.push(self.shape(a).to_vec(), out, Op::MaskedLogSoftmax(a, mask))
    }

    /// `sum_t weights[t] * items[t]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        assert_eq!(self.value(weights).len(), items.len(), "weighted_sum arity");
        let d = self.value(items[0]).len();
        let mut out = vec![0.0; d];
        for (t, &item) in items.iter().enumerate() {
            let w = self.value(weights)[t];
            assert_eq!(self.value(item).len(), d, "weighted_sum item dims");
            out.iter_mut().zip(self.value(item)).for_each(|(o, x)| *o += w * x);
        }
        self.push(vec![d], out, Op::WeightedSum {
            weights,
            items: items.to_vec(),
        })
    }

    /// Row `row` of a 2-d table (embedding lookup).
    pub fn row(&mut self, table: Var, row: usize) -> Var {
        let shape = self.shape(table);
        assert_eq!(shape.len(), 2, "row lookup on non-matrix");
        let cols = shape[1];
        assert!(row < shape[0], "row {row} out of range for {shape:?}");
        let out = self.value(table)[row * cols..(row + 1) * cols].to_vec();
        self.push(vec![cols], out, Op::Row { table, row })
    }

    /// One LSTM step. `w: [4H, I + H]` with gate blocks ordered
    /// (input, forget, cell, output), `b: [4H]`. Returns `[h'; c']`
    /// as one node of length `2H`; use [`Graph::slice`] to split it.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w: Var, b: Var) -> Var {
        let hsz = self.value(h).len();
        let isz = self.value(x).len();
        assert_eq!(self.value(c).len(), hsz, "lstm cell state size");
        assert_eq!(self.shape(w), &[4 * hsz, isz + hsz], "lstm weight shape");
        assert_eq!(self.value(b).len(), 4 * hsz, "lstm bias size");
        let mut input = Vec::with_capacity(isz + hsz);
        input.extend_from_slice(self.value(x));
        input.extend_from_slice(self.value(h));
        let wv = self.value(w);
        let bv = self.value(b);
        let cols = isz + hsz;
        let mut gates = vec![0.0; 4 * hsz];
        for (r, g) in gates.iter_mut().enumerate() {
            let row = &wv[r * cols..(r + 1) * cols];
            *g = bv[r] + row.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>();
        }
        for (r, g) in gates.iter_mut().enumerate() {
            *g = if r / hsz == 2 { g.tanh() } else { sigmoid(*g) };
        }
        let cv = self.value(c);
        let mut out = vec![0.0; 2 * hsz];
        let mut tanh_c = vec![0.0; hsz];
        for k in 0..hsz {
            let (i, f, g, o) = (gates[k], gates[hsz + k], gates[2 * hsz + k], gates[3 * hsz + k]);
            let c_new = f * cv[k] + i * g;
            tanh_c[k] = c_new.tanh();
            out[k] = o * tanh_c[k];
            out[hsz + k] = c_new;
        }
        let var = self.push(vec![2 * hsz], out, Op::Lstm { x, h, c, w, b });
        gates.extend_from_slice(&tanh_c);
        self.nodes[var.0].aux = gates;
        var
    }

    /// `sum_k softplus(z_k) - y_k z_k`: binary cross-entropy of
    /// `sigmoid(logits)` against `targets`, as a scalar.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        assert_eq!(self.value(logits).len(), targets.len(), "bce arity");
        let loss = self
            .value(logits)
            .iter()
            .zip(&targets)
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum();
        self.push(vec![1], vec![loss], Op::BceWithLogits(logits, targets))
    }

    /// Reverse pass from scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = |v: Var| self.nodes[v.0].value.as_slice();
            let len = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
                    let (m, n) = (sa[0], sa[1]);
                    let p = if sb.len() == 2 { sb[1] } else { 1 };
                    let (av, bv) = (val(*a), val(*b));
                    {
                        let ga = acc(&mut grads, *a, m * n);
                        for i in 0..m {
                            for k in 0..n {
                                let mut s = 0.0;
                                for j in 0..p {
                                    s += g[i * p + j] * bv[k * p + j];
                                }
                                ga[i * n + k] += s;
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, n * p);
                    for i in 0..m {
                        for k in 0..n {
                            let aik = av[i * n + k];
                            for j in 0..p {
                                gb[k * p + j] += aik * g[i * p + j];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        acc(&mut grads, v, g.len()).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a).to_vec(), val(*b).to_vec());
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * bv[k];
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for k in 0..g.len() {
                        gb[k] += g[k] * av[k];
                    }
                }
                Op::Scale(a, factor) => {
                    acc(&mut grads, *a, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(x, y)| *x += factor * y);
                }
                Op::Sum(items) => {
                    for &v in items {
                        acc(&mut grads, v, g.len()).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Concat(items) => {
                    let mut offset = 0;
                    for &v in items {
                        let n = len(v);
                        acc(&mut grads, v, n)
                            .iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(x, y)| *x += y);
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let ga = acc(&mut grads, *a, len(*a));
                    ga[*start..*start + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(x, y)| *x += y);
                }
                Op::Pick(a, index) => {
                    acc(&mut grads, *a, len(*a))[*index] += g[0];
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - node.value[k] * node.value[k]);
                    }
                }
                Op::Relu(a) => {
                    let av = val(*a).to_vec();
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        if av[k] > 0.0 {
                            ga[k] += g[k];
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        let y = node.value[k];
                        ga[k] += g[k] * y * (1.0 - y);
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += y[k] * (g[k] - dot);
                    }
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    let total: f64 = g.iter().zip(mask.iter()).filter(|(_, &m)| m).map(|(x, _)| x).sum();
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        if mask[k] {
                            ga[k] += g[k] - node.value[k].exp() * total;
                        }
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let mut gw = vec![0.0; items.len()];
                    for (t, &item) in items.iter().enumerate() {
                        gw[t] = val(item).iter().zip(&g).map(|(x, y)| x * y).sum();
                    }
                    let wv = val(*weights).to_vec();
                    for (t, &item) in items.iter().enumerate() {
                        acc(&mut grads, item, g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(x, y)| *x += wv[t] * y);
                    }
                    acc(&mut grads, *weights, items.len())
                        .iter_mut()
                        .zip(&gw)
                        .for_each(|(x, y)| *x += y);
                }
                Op::Row { table, row } => {
                    let cols = g.len();
                    let gt = acc(&mut grads, *table, len(*table));
                    gt[row * cols..(row + 1) * cols]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(x, y)| *x += y);
                }
                Op::Lstm { x, h, c, w, b } => {
                    let hsz = len(*h);
                    let isz = len(*x);
                    let cols = isz + hsz;
                    let aux = &node.aux;
                    let (gates, tanh_c) = aux.split_at(4 * hsz);
                    let c_prev = val(*c);
                    let mut dz = vec![0.0; 4 * hsz];
                    let mut dc_prev = vec![0.0; hsz];
                    for k in 0..hsz {
                        let (i, f, gg, o) = (gates[k], gates[hsz + k], gates[2 * hsz + k], gates[3 * hsz + k]);
                        let dh = g[k];
                        let dc = g[hsz + k] + dh * o * (1.0 - tanh_c[k] * tanh_c[k]);
                        let d_o = dh * tanh_c[k];
                        dz[k] = dc * gg * i * (1.0 - i);
                        dz[hsz + k] = dc * c_prev[k] * f * (1.0 - f);
                        dz[2 * hsz + k] = dc * i * (1.0 - gg * gg);
                        dz[3 * hsz + k] = d_o * o * (1.0 - o);
                        dc_prev[k] = dc * f;
                    }
                    let mut input = Vec::with_capacity(cols);
                    input.extend_from_slice(val(*x));
                    input.extend_from_slice(val(*h));
                    let wv = val(*w);
                    let mut dinput = vec![0.0; cols];
                    for r in 0..4 * hsz {
                        let row = &wv[r * cols..(r + 1) * cols];
                        for col in 0..cols {
                            dinput[col] += row[col] * dz[r];
                        }
                    }
                    {
                        let gw = acc(&mut grads, *w, 4 * hsz * cols);
                        for r in 0..4 * hsz {
                            let d = dz[r];
                            if d != 0.0 {
                                for col in 0..cols {
                                    gw[r * cols + col] += d * input[col];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *b, 4 * hsz).iter_mut().zip(&dz).for_each(|(x, y)| *x += y);
                    acc(&mut grads, *x, isz)
                        .iter_mut()
                        .zip(&dinput[..isz])
                        .for_each(|(a, d)| *a += d);
                    acc(&mut grads, *h, hsz)
                        .iter_mut()
                        .zip(&dinput[isz..])
                        .for_each(|(a, d)| *a += d);
                    acc(&mut grads, *c, hsz)
                        .iter_mut()
                        .zip(&dc_prev)
                        .for_each(|(a, d)| *a += d);
                }
                Op::BceWithLogits(a, targets) => {
                    let av = val(*a).to_vec();
                    let ga = acc(&mut grads, *a, av.len());
                    for k in 0..av.len() {
                        ga[k] += g[0] * (sigmoid(av[k]) - targets[k]);
                    }
                }
            }
        }

        let mut out = Grads::default();
        for (name, v) in &self.params {
            if v.0 <= loss.0 {
                if let Some(g) = grads[v.0].take() {
                    out.grads.insert(name.clone(), g);
                }
            }
        }
        out
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-softmax over the `mask`ed entries; other entries are 0.
pub fn masked_log_softmax(z: &[f64], mask: &[bool]) -> Vec<f64> {
    assert_eq!(z.len(), mask.len(), "mask length");
    let max = z
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite() || max == f64::INFINITY, "masked_log_softmax with empty mask");
    let lse = max
        + z.iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(x, _)| (x - max).exp())
            .sum::<f64>()
            .ln();
    z.iter()
        .zip(mask)
        .map(|(x, &m)| if m { x - lse } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -2.0, 700.0, 3.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn masked_log_softmax_zero_outside_mask() {
        let out = masked_log_softmax(&[1.0, 2.0, 3.0], &[true, false, true]);
        assert_eq!(out[1], 0.0);
        let total = out[0].exp() + out[2].exp();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_all_of_matrix() {
        let mut g = Graph::new();
        let a = g.constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let s = g.sum_all(a);
        assert_eq!(g.scalar(s), 10.0);
    }

    #[test]
    fn non_finite_is_reported_with_op_name() {
        let mut g = Graph::new();
        let a = g.vector(vec![1e308]);
        let b = g.scale(a, 10.0);
        let _ = g.tanh(b);
        match g.check_finite() {
            Err(Error::NonFinite { op }) => assert_eq!(op, "scale"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn shared_param_leaf_accumulates() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(vec![3.0])).unwrap();
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let w2 = g.param(&store, "w").unwrap();
        assert_eq!(w, w2);
        let sq = g.mul(w, w2);
        let loss = g.sum_all(sq);
        let grads = g.backward(loss);
        assert_eq!(grads.get("w").unwrap(), &[6.0]);
    }
}

//! Define-by-run reverse-mode tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! creation order, so reverse creation order is a valid topological order
//! for the backward sweep. Parameter leaves are views into a borrowed
//! [`ParamStore`]; their adjoints are flushed into a [`Gradients`] buffer.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Array, Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Clamp applied to predicted probabilities before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param { id: ParamId, offset: usize },
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    AddConst(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Clamp { a: NodeId, lo: f64, hi: f64 },
    Concat(Vec<NodeId>),
    Slice { a: NodeId, start: usize },
    Sum(NodeId),
    SumN(Vec<NodeId>),
    Mean(Vec<NodeId>),
    Dot(NodeId, NodeId),
    Softmax(NodeId),
    Squash(NodeId),
    Norm(NodeId),
    NormalizeSum(NodeId),
    WeightedSum { p: NodeId, items: Vec<NodeId> },
    Bce { pred: NodeId, label: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    len: usize,
    // Empty for parameter views; their values live in the store.
    value: Vec<f64>,
}

/// Tape of one forward pass over a borrowed parameter store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    views: BTreeMap<(ParamId, usize, usize), NodeId>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new(), views: BTreeMap::new() }
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

    /// Parameters with at least one view on this tape.
    pub fn used_params(&self) -> BTreeSet<ParamId> {
        self.views.keys().map(|k| k.0).collect()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let node = &self.nodes[id.idx()];
        match node.op {
            Op::Param { id: pid, offset } => &self.params.get(pid).data()[offset..offset + node.len],
            _ => &node.value,
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    pub fn node_len(&self, id: NodeId) -> usize {
        self.nodes[id.idx()].len
    }

    /// Copies a node value into a 1-D [`Array`].
    pub fn array(&self, id: NodeId) -> Array {
        let v = self.value(id).to_vec();
        Array::from_raw(vec![v.len()], v)
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        let len = value.len();
        self.push_len(op, value, len)
    }

    fn push_len(&mut self, op: Op, value: Vec<f64>, len: usize) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, len, value });
        id
    }

    fn same_len(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<usize> {
        let (la, lb) = (self.node_len(a), self.node_len(b));
        if la != lb {
            return Err(Error::dim(op, format!("operands have lengths {la} and {lb}")));
        }
        Ok(la)
    }

    // ---- leaves -------------------------------------------------------

    /// Constant input; receives no gradient outside this graph.
    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        self.push(Op::Input, values)
    }

    /// Whole-parameter view. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let len = self.params.get(id).len();
        self.view(id, 0, len)
    }

    /// Row `row` of a parameter whose leading axis indexes rows
    /// (embedding lookup, or one block of a stacked matrix array).
    pub fn param_row(&mut self, id: ParamId, row: usize) -> Result<NodeId> {
        let arr = self.params.get(id);
        let width = arr.row_width();
        let rows = arr.shape().first().copied().unwrap_or(0);
        if row >= rows {
            return Err(Error::dim(
                "param_row",
                format!("row {row} out of range for `{}` with {rows} rows", self.params.name(id)),
            ));
        }
        Ok(self.view(id, row * width, width))
    }

    fn view(&mut self, id: ParamId, offset: usize, len: usize) -> NodeId {
        if let Some(&n) = self.views.get(&(id, offset, len)) {
            return n;
        }
        let n = self.push_len(Op::Param { id, offset }, Vec::new(), len);
        self.views.insert((id, offset, len), n);
        n
    }

    // ---- primitives ---------------------------------------------------

    /// `weight · input` for a row-major `rows × cols` weight.
    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        if self.node_len(w) != rows * cols {
            return Err(Error::dim(
                "matvec",
                format!("weight has {} values, expected {rows}x{cols}", self.node_len(w)),
            ));
        }
        if self.node_len(x) != cols {
            return Err(Error::dim(
                "matvec",
                format!("input has length {}, weight expects {cols}", self.node_len(x)),
            ));
        }
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..rows)
            .map(|r| wv[r * cols..(r + 1) * cols].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Op::MatVec { w, x, rows, cols }, out))
    }

    /// `weight · input + bias`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let rows = self.node_len(bias);
        let cols = self.node_len(input);
        if self.node_len(weight) != rows * cols {
            return Err(Error::dim(
                "linear",
                format!(
                    "weight has {} values but input is {cols} and bias is {rows}",
                    self.node_len(weight)
                ),
            ));
        }
        let wx = self.matvec(weight, input, rows, cols)?;
        self.add(wx, bias)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).iter().map(|x| x * c).collect();
        self.push(Op::Scale(a, c), out)
    }

    /// Vector `a` times the scalar node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.node_len(s) != 1 {
            return Err(Error::dim("scale_by", "scale must be a scalar node"));
        }
        let c = self.scalar(s);
        let out = self.value(a).iter().map(|x| x * c).collect();
        Ok(self.push(Op::ScaleBy(a, s), out))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).iter().map(|x| x + c).collect();
        self.push(Op::AddConst(a), out)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|&x| libm::tanh(x)).collect();
        self.push(Op::Tanh(a), out)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|&x| libm::exp(x)).collect();
        self.push(Op::Exp(a), out)
    }

    /// Natural logarithm; inputs must be positive.
    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFinite { context: "ln of a non-positive value".into() });
        }
        let out = self.value(a).iter().map(|&x| libm::log(x)).collect();
        Ok(self.push(Op::Ln(a), out))
    }

    /// Elementwise clamp; the gradient is blocked where the bound is active.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.value(a).iter().map(|x| x.clamp(lo, hi)).collect();
        self.push(Op::Clamp { a, lo, hi }, out)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.node_len(p)).sum());
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        self.push(Op::Concat(parts.to_vec()), out)
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.node_len(a) {
            return Err(Error::dim(
                "slice",
                format!("[{start}, {}) exceeds length {}", start + len, self.node_len(a)),
            ));
        }
        let out = self.value(a)[start..start + len].to_vec();
        Ok(self.push(Op::Slice { a, start }, out))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), vec![s])
    }

    /// Sum of equally sized nodes.
    pub fn sum_n(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let out = self.fold_items("sum_n", items)?;
        Ok(self.push(Op::SumN(items.to_vec()), out))
    }

    /// Mean of equally sized nodes.
    pub fn mean(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let mut out = self.fold_items("mean", items)?;
        let inv = 1.0 / items.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(self.push(Op::Mean(items.to_vec()), out))
    }

    fn fold_items(&self, op: &'static str, items: &[NodeId]) -> Result<Vec<f64>> {
        let first = *items.first().ok_or_else(|| Error::dim(op, "no operands"))?;
        let mut out = self.value(first).to_vec();
        for &it in &items[1..] {
            self.same_len(op, first, it)?;
            out.iter_mut().zip(self.value(it)).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("dot", a, b)?;
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(Op::Dot(a, b), vec![s]))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let out = softmax(self.value(a))?;
        Ok(self.push(Op::Softmax(a), out))
    }

    /// Capsule nonlinearity `|s|^2 / (1 + |s|^2) * s / |s|`, zero at zero.
    pub fn squash(&mut self, a: NodeId) -> NodeId {
        let out = squash(self.value(a));
        self.push(Op::Squash(a), out)
    }

    /// Euclidean norm; the gradient at the origin is taken as zero.
    pub fn norm(&mut self, a: NodeId) -> NodeId {
        let n = l2(self.value(a));
        self.push(Op::Norm(a), vec![n])
    }

    /// `a / sum(a)` for non-negative entries; an all-zero input maps to the
    /// uniform vector.
    pub fn normalize_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::dim("normalize_sum", "empty vector"));
        }
        let s: f64 = v.iter().sum();
        let out = if s == 0.0 {
            vec![1.0 / v.len() as f64; v.len()]
        } else {
            v.iter().map(|x| x / s).collect()
        };
        Ok(self.push(Op::NormalizeSum(a), out))
    }

    /// `sum_i p[i] * items[i]`.
    pub fn weighted_sum(&mut self, p: NodeId, items: &[NodeId]) -> Result<NodeId> {
        if self.node_len(p) != items.len() || items.is_empty() {
            return Err(Error::dim(
                "weighted_sum",
                format!("{} weights for {} items", self.node_len(p), items.len()),
            ));
        }
        let width = self.node_len(items[0]);
        let mut out = vec![0.0; width];
        for (k, &it) in items.iter().enumerate() {
            self.same_len("weighted_sum", items[0], it)?;
            let w = self.value(p)[k];
            out.iter_mut().zip(self.value(it)).for_each(|(o, v)| *o += w * v);
        }
        Ok(self.push(Op::WeightedSum { p, items: items.to_vec() }, out))
    }

    /// Binary cross-entropy of a scalar probability against a 0/1 label,
    /// with the probability clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, pred: NodeId, label: f64) -> Result<NodeId> {
        if label != 0.0 && label != 1.0 {
            return Err(Error::invalid("label", format!("{label} is not 0 or 1")));
        }
        if self.node_len(pred) != 1 {
            return Err(Error::dim("bce", "prediction must be a scalar node"));
        }
        let loss = bce(self.scalar(pred), label);
        Ok(self.push(Op::Bce { pred, label }, vec![loss]))
    }

    // ---- backward -----------------------------------------------------

    /// Back-propagates from the scalar `root` (seeded with `seed`) and adds
    /// every parameter adjoint into `grads`.
    pub fn backward(&self, root: NodeId, seed: f64, grads: &mut Gradients) -> Result<()> {
        if self.node_len(root) != 1 {
            return Err(Error::dim("backward", "root must be a scalar node"));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.idx() + 1];
        adj[root.idx()] = Some(vec![seed]);

        for i in (0..=root.idx()).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param { id, offset } => grads.accumulate(*id, *offset, &g),
                Op::MatVec { w, x, rows, cols } => {
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    let gw = slot(&mut adj, *w, rows * cols);
                    for r in 0..*rows {
                        let gr = g[r];
                        if gr != 0.0 {
                            for (d, xc) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *d += gr * xc;
                            }
                        }
                    }
                    let gx = slot(&mut adj, *x, *cols);
                    for r in 0..*rows {
                        let gr = g[r];
                        if gr != 0.0 {
                            for (d, wc) in gx.iter_mut().zip(&wv[r * cols..(r + 1) * cols]) {
                                *d += gr * wc;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut adj, *a, g.len()), &g);
                    add_into(slot(&mut adj, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut adj, *a, g.len()), &g);
                    let gb = slot(&mut adj, *b, g.len());
                    gb.iter_mut().zip(&g).for_each(|(d, v)| *d -= v);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut adj, *a, g.len());
                    ga.iter_mut().zip(g.iter().zip(bv)).for_each(|(d, (v, y))| *d += v * y);
                    let gb = slot(&mut adj, *b, g.len());
                    gb.iter_mut().zip(g.iter().zip(av)).for_each(|(d, (v, x))| *d += v * x);
                }
                Op::Scale(a, c) => {
                    let ga = slot(&mut adj, *a, g.len());
                    ga.iter_mut().zip(&g).for_each(|(d, v)| *d += v * c);
                }
                Op::ScaleBy(a, s) => {
                    let c = self.scalar(*s);
                    let av = self.value(*a);
                    let ds: f64 = g.iter().zip(av).map(|(v, x)| v * x).sum();
                    let ga = slot(&mut adj, *a, g.len());
                    ga.iter_mut().zip(&g).for_each(|(d, v)| *d += v * c);
                    slot(&mut adj, *s, 1)[0] += ds;
                }
                Op::AddConst(a) => add_into(slot(&mut adj, *a, g.len()), &g),
                Op::Sigmoid(a) => {
                    let ga = slot(&mut adj, *a, g.len());
                    for ((d, v), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *d += v * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let ga = slot(&mut adj, *a, g.len());
                    for ((d, v), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *d += v * (1.0 - y * y);
                    }
                }
                Op::Exp(a) => {
                    let ga = slot(&mut adj, *a, g.len());
                    for ((d, v), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *d += v * y;
                    }
                }
                Op::Ln(a) => {
                    let av = self.value(*a);
                    let ga = slot(&mut adj, *a, g.len());
                    for ((d, v), x) in ga.iter_mut().zip(&g).zip(av) {
                        *d += v / x;
                    }
                }
                Op::Clamp { a, lo, hi } => {
                    let av = self.value(*a);
                    let ga = slot(&mut adj, *a, g.len());
                    for ((d, v), x) in ga.iter_mut().zip(&g).zip(av) {
                        if *x >= *lo && *x <= *hi {
                            *d += v;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let n = self.node_len(p);
                        add_into(slot(&mut adj, p, n), &g[at..at + n]);
                        at += n;
                    }
                }
                Op::Slice { a, start } => {
                    let n = self.node_len(*a);
                    add_into(&mut slot(&mut adj, *a, n)[*start..*start + g.len()], &g);
                }
                Op::Sum(a) => {
                    let n = self.node_len(*a);
                    slot(&mut adj, *a, n).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::SumN(items) => {
                    for &it in items {
                        add_into(slot(&mut adj, it, g.len()), &g);
                    }
                }
                Op::Mean(items) => {
                    let inv = 1.0 / items.len() as f64;
                    for &it in items {
                        let gi = slot(&mut adj, it, g.len());
                        gi.iter_mut().zip(&g).for_each(|(d, v)| *d += v * inv);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut adj, *a, av.len());
                    ga.iter_mut().zip(bv).for_each(|(d, y)| *d += g[0] * y);
                    let gb = slot(&mut adj, *b, bv.len());
                    gb.iter_mut().zip(av).for_each(|(d, x)| *d += g[0] * x);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let inner: f64 = g.iter().zip(y).map(|(v, yi)| v * yi).sum();
                    let ga = slot(&mut adj, *a, y.len());
                    for ((d, v), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *d += yi * (v - inner);
                    }
                }
                Op::Squash(a) => {
                    let s = self.value(*a);
                    let n2: f64 = s.iter().map(|x| x * x).sum();
                    if n2 > 0.0 {
                        let n = libm::sqrt(n2);
                        let f = n / (1.0 + n2);
                        // d/dn [n / (1 + n^2)] / n
                        let fp_over_n = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2)) / n;
                        let sg: f64 = s.iter().zip(&g).map(|(x, v)| x * v).sum();
                        let ga = slot(&mut adj, *a, s.len());
                        for ((d, v), x) in ga.iter_mut().zip(&g).zip(s) {
                            *d += f * v + x * fp_over_n * sg;
                        }
                    }
                }
                Op::Norm(a) => {
                    let s = self.value(*a);
                    let n = node.value[0];
                    if n > 0.0 {
                        let ga = slot(&mut adj, *a, s.len());
                        ga.iter_mut().zip(s).for_each(|(d, x)| *d += g[0] * x / n);
                    }
                }
                Op::NormalizeSum(a) => {
                    let x = self.value(*a);
                    let total: f64 = x.iter().sum();
                    if total != 0.0 {
                        let y = &node.value;
                        let inner: f64 = g.iter().zip(y).map(|(v, yi)| v * yi).sum();
                        let ga = slot(&mut adj, *a, x.len());
                        ga.iter_mut().zip(&g).for_each(|(d, v)| *d += (v - inner) / total);
                    }
                }
                Op::WeightedSum { p, items } => {
                    let pv = self.value(*p);
                    let dp: Vec<f64> = items
                        .iter()
                        .map(|&it| self.value(it).iter().zip(&g).map(|(x, v)| x * v).sum())
                        .collect();
                    for (k, &it) in items.iter().enumerate() {
                        let w = pv[k];
                        let gi = slot(&mut adj, it, g.len());
                        gi.iter_mut().zip(&g).for_each(|(d, v)| *d += w * v);
                    }
                    add_into(slot(&mut adj, *p, items.len()), &dp);
                }
                Op::Bce { pred, label } => {
                    let p = self.scalar(*pred);
                    if p > BCE_EPS && p < 1.0 - BCE_EPS {
                        slot(&mut adj, *pred, 1)[0] += g[0] * (-label / p + (1.0 - label) / (1.0 - p));
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    adj[id.idx()].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

// ---- plain-value kernels shared with the graph ops ---------------------

/// Overflow-safe logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::dim("softmax", "empty vector"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| libm::exp(x - max)).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / s).collect())
}

pub fn squash(s: &[f64]) -> Vec<f64> {
    let n2: f64 = s.iter().map(|x| x * x).sum();
    if n2 == 0.0 {
        return vec![0.0; s.len()];
    }
    let n = libm::sqrt(n2);
    let f = n / (1.0 + n2);
    s.iter().map(|x| x * f).collect()
}

pub fn l2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

pub fn bce(pred: f64, label: f64) -> f64 {
    let p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(label * libm::log(p) + (1.0 - label) * libm::log(1.0 - p))
}

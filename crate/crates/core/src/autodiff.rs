//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation eagerly as it is applied, so node
//! ids are a topological order by construction. [`Graph::backward`] walks
//! the records once in reverse and returns the gradient of a scalar loss
//! with respect to every node that requires one.
//!
//! The nonlinearity used throughout the models is GELU in its tanh
//! approximation; it is smooth everywhere, which keeps finite-difference
//! gradient checks clean.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Gelu(_) => "gelu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::LogSumExp(_) => "logsumexp",
            Op::Gather(..) => "gather",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dropout(..) => "dropout",
            Op::Sum(_) => "sum",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Operation tape for one forward computation.
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    training: bool,
    rng: ChaCha8Rng,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(sum(exp(row)))`.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let len = x.row_len();
    let mut out = x.clone();
    if len == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(len) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Row-wise softmax over the last dimension of a plain tensor.
pub fn softmax(x: &Tensor) -> Tensor {
    softmax_rows(x)
}

fn row_shape(shape: &[usize]) -> Vec<usize> {
    if shape.is_empty() {
        Vec::new()
    } else {
        shape[..shape.len() - 1].to_vec()
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Graph in inference mode: dropout is the identity.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Graph in training mode; dropout masks are drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Graph {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::LogSumExp(a)
            | Op::Gather(a, _)
            | Op::Reshape(a)
            | Op::Dropout(a, _)
            | Op::Sum(a)
            | Op::Slice { x: a, .. } => self.requires_grad(*a),
            Op::Concat(xs, _) => xs.iter().any(|x| self.requires_grad(*x)),
            Op::LayerNorm { x, gain, bias, .. } => {
                self.requires_grad(*x) || self.requires_grad(*gain) || self.requires_grad(*bias)
            }
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding a copy of a stored parameter. Repeated calls return the
    /// same node, so gradients for one parameter accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let p = store.param(id);
        let v = self.push(Op::Leaf, p.value.clone());
        self.nodes[v.0].requires_grad = p.requires_grad;
        self.param_vars.insert(id, v);
        v
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Free leaf with an explicit gradient flag (not tied to any parameter).
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let v = self.push(Op::Leaf, value);
        self.nodes[v.0].requires_grad = requires_grad;
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        Ok(self.push(Op::Transpose(a), value))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    /// Adds `row` (with as many elements as the last dimension of `a`) to
    /// every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let len = self.value(a).row_len();
        if self.value(row).numel() != len {
            return Err(Error::Shape {
                op: "add_row",
                left: self.shape(a).to_vec(),
                right: self.shape(row).to_vec(),
            });
        }
        let mut value = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        if len > 0 {
            for chunk in value.data_mut().chunks_mut(len) {
                for (v, b) in chunk.iter_mut().zip(&r) {
                    *v += b;
                }
            }
        }
        Ok(self.push(Op::AddRow(a, row), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v * c);
        self.push(Op::Scale(a, c), value)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        self.push(Op::Gelu(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    fn check_rows(&self, op: &'static str, a: Var) -> Result<()> {
        if self.value(a).ndim() == 0 || self.value(a).row_len() == 0 {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: vec![],
            });
        }
        Ok(())
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check_rows("softmax", a)?;
        let value = softmax_rows(self.value(a));
        Ok(self.push(Op::Softmax(a), value))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.check_rows("log_softmax", a)?;
        let x = self.value(a);
        let len = x.row_len();
        let mut value = x.clone();
        for row in value.data_mut().chunks_mut(len) {
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(self.push(Op::LogSoftmax(a), value))
    }

    /// `log(sum(exp(.)))` over the last dimension, which is removed.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        self.check_rows("logsumexp", a)?;
        let x = self.value(a);
        let data = (0..x.num_rows()).map(|i| log_sum_exp(x.row(i))).collect();
        let value = Tensor::new(&row_shape(x.shape()), data)?;
        Ok(self.push(Op::LogSumExp(a), value))
    }

    /// `out.flat[k] = a.flat[indices[k]]`, reshaped to `shape`.
    pub fn gather(&mut self, a: Var, indices: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= x.numel()) {
            return Err(Error::contract(format!(
                "gather index {bad} out of range for {:?}",
                x.shape()
            )));
        }
        let data = indices.iter().map(|&i| x.data()[i]).collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(Op::Gather(a, indices), value))
    }

    /// Rows of a 2-d tensor in the given order (embedding lookup).
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims2("select_rows")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::contract(format!("row {bad} out of range for {m} rows")));
        }
        let indices = rows.iter().flat_map(|&r| (r * n)..(r * n + n)).collect();
        self.gather(a, indices, &[rows.len(), n])
    }

    /// Concatenates 2-d tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() || axis > 1 {
            return Err(Error::contract("concat needs inputs and axis 0 or 1"));
        }
        let (m0, n0) = self.value(xs[0]).dims2("concat")?;
        let mut shape = [m0, n0];
        for &x in &xs[1..] {
            let (m, n) = self.value(x).dims2("concat")?;
            let other = if axis == 0 { n } else { m };
            if other != shape[1 - axis] {
                return Err(Error::Shape {
                    op: "concat",
                    left: self.shape(xs[0]).to_vec(),
                    right: self.shape(x).to_vec(),
                });
            }
            shape[axis] += if axis == 0 { m } else { n };
        }
        let mut data = Vec::with_capacity(shape[0] * shape[1]);
        if axis == 0 {
            for &x in xs {
                data.extend_from_slice(self.value(x).data());
            }
        } else {
            for i in 0..shape[0] {
                for &x in xs {
                    data.extend_from_slice(self.value(x).row(i));
                }
            }
        }
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(Op::Concat(xs.to_vec(), axis), value))
    }

    /// Contiguous slice of a 2-d tensor along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2("slice")?;
        let extent = if axis == 0 { m } else { n };
        if axis > 1 || start + len > extent {
            return Err(Error::contract(format!(
                "slice {start}..{} out of range on axis {axis} of {:?}",
                start + len,
                self.shape(a)
            )));
        }
        let x = self.value(a);
        let value = if axis == 0 {
            Tensor::new(&[len, n], x.data()[start * n..(start + len) * n].to_vec())?
        } else {
            let mut data = Vec::with_capacity(m * len);
            for i in 0..m {
                data.extend_from_slice(&x.row(i)[start..start + len]);
            }
            Tensor::new(&[m, len], data)?
        };
        Ok(self.push(Op::Slice { x: a, axis, start }, value))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.slice(a, 0, start, len)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.slice(a, 1, start, len)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(a), value))
    }

    /// Layer normalization over the last dimension with learned gain and
    /// bias (each with as many elements as the last dimension).
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        self.check_rows("layer_norm", a)?;
        let x = self.value(a);
        let len = x.row_len();
        if self.value(gain).numel() != len || self.value(bias).numel() != len {
            return Err(Error::Shape {
                op: "layer_norm",
                left: x.shape().to_vec(),
                right: self.shape(gain).to_vec(),
            });
        }
        let mut normalized = x.clone();
        let mut inv_std = Vec::with_capacity(x.num_rows());
        for row in normalized.data_mut().chunks_mut(len) {
            let mean = row.iter().sum::<f64>() / len as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let r = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * r;
            }
            inv_std.push(r);
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut value = normalized.clone();
        for row in value.data_mut().chunks_mut(len) {
            for ((v, gi), bi) in row.iter_mut().zip(g).zip(b) {
                *v = *v * gi + bi;
            }
        }
        Ok(self.push(
            Op::LayerNorm {
                x: a,
                gain,
                bias,
                normalized,
                inv_std,
            },
            value,
        ))
    }

    /// Inverted dropout. Identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let n = self.value(a).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let value = Tensor::new(
            self.shape(a),
            self.value(a).data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        )
        .expect("mask matches input");
        self.push(Op::Dropout(a, mask), value)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), value)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums a list of scalars.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let mut iter = xs.iter();
        let mut acc = *iter.next().ok_or_else(|| Error::contract("add_all of nothing"))?;
        for &x in iter {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }

        let params = self
            .param_vars
            .iter()
            .filter_map(|(&pid, &v)| grads[v.0].as_ref().map(|_| (pid, v)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, g: Tensor) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.requires_grad(a) {
                    let ga = g.matmul(&self.value(b).transpose()?)?;
                    self.accumulate(grads, a, ga);
                }
                if self.requires_grad(b) {
                    let gb = self.value(a).transpose()?.matmul(g)?;
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()?),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*row) {
                    let len = g.row_len();
                    let mut acc = vec![0.0; len];
                    for chunk in g.data().chunks(len) {
                        for (s, v) in acc.iter_mut().zip(chunk) {
                            *s += v;
                        }
                    }
                    let gr = Tensor::new(self.shape(*row), acc)?;
                    self.accumulate(grads, *row, gr);
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.requires_grad(a) {
                    let ga = zip_map(g, self.value(b), |x, y| x * y);
                    self.accumulate(grads, a, ga);
                }
                if self.requires_grad(b) {
                    let gb = zip_map(g, self.value(a), |x, y| x * y);
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| v * c)),
            Op::Gelu(a) => {
                let ga = zip_map(g, self.value(*a), |gv, x| gv * gelu_grad(x));
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = zip_map(g, out, |gv, s| gv * s * (1.0 - s));
                self.accumulate(grads, *a, ga);
            }
            Op::Softmax(a) => {
                let len = out.row_len();
                let mut ga = g.clone();
                for (grow, prow) in ga.data_mut().chunks_mut(len).zip(out.data().chunks(len)) {
                    let dot: f64 = grow.iter().zip(prow).map(|(x, p)| x * p).sum();
                    for (gv, p) in grow.iter_mut().zip(prow) {
                        *gv = p * (*gv - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LogSoftmax(a) => {
                let len = out.row_len();
                let mut ga = g.clone();
                for (grow, lrow) in ga.data_mut().chunks_mut(len).zip(out.data().chunks(len)) {
                    let total: f64 = grow.iter().sum();
                    for (gv, lp) in grow.iter_mut().zip(lrow) {
                        *gv -= lp.exp() * total;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LogSumExp(a) => {
                let x = self.value(*a);
                let len = x.row_len();
                let mut ga = x.clone();
                for (i, row) in ga.data_mut().chunks_mut(len).enumerate() {
                    let lse = out.data()[i];
                    let gi = g.data()[i];
                    for v in row.iter_mut() {
                        *v = gi * (*v - lse).exp();
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Gather(a, indices) => {
                let mut ga = Tensor::zeros(self.shape(*a));
                let data = ga.data_mut();
                for (&src, gv) in indices.iter().zip(g.data()) {
                    data[src] += gv;
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Concat(xs, axis) => {
                let mut offset = 0;
                let cols = g.row_len();
                for &x in xs {
                    let (m, n) = self.value(x).dims2("concat")?;
                    let gx = if *axis == 0 {
                        Tensor::new(&[m, n], g.data()[offset * cols..(offset + m) * cols].to_vec())?
                    } else {
                        let mut data = Vec::with_capacity(m * n);
                        for i in 0..m {
                            data.extend_from_slice(&g.row(i)[offset..offset + n]);
                        }
                        Tensor::new(&[m, n], data)?
                    };
                    offset += if *axis == 0 { m } else { n };
                    self.accumulate(grads, x, gx);
                }
            }
            Op::Slice { x, axis, start } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                let (_, n) = gx.dims2("slice")?;
                let (gm, gn) = g.dims2("slice")?;
                let data = gx.data_mut();
                for i in 0..gm {
                    for j in 0..gn {
                        let (si, sj) = if *axis == 0 { (start + i, j) } else { (i, start + j) };
                        data[si * n + sj] += g.data()[i * gn + j];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Reshape(a) => {
                let ga = g.clone().reshape(self.shape(*a))?;
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let len = normalized.row_len();
                let gain_v = self.value(*gain).data();
                if self.requires_grad(*gain) || self.requires_grad(*bias) {
                    let mut gg = vec![0.0; len];
                    let mut gb = vec![0.0; len];
                    for (grow, nrow) in g.data().chunks(len).zip(normalized.data().chunks(len)) {
                        for k in 0..len {
                            gg[k] += grow[k] * nrow[k];
                            gb[k] += grow[k];
                        }
                    }
                    self.accumulate(grads, *gain, Tensor::new(self.shape(*gain), gg)?);
                    self.accumulate(grads, *bias, Tensor::new(self.shape(*bias), gb)?);
                }
                if self.requires_grad(*x) {
                    let mut gx = normalized.clone();
                    let rows = gx.data_mut().chunks_mut(len).zip(g.data().chunks(len)).zip(inv_std);
                    for ((row, grow), &r) in rows {
                        // row currently holds xhat
                        let dxhat: Vec<f64> = grow.iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / len as f64;
                        let mean_dx = dxhat.iter().zip(row.iter()).map(|(d, xh)| d * xh).sum::<f64>() / len as f64;
                        for (v, d) in row.iter_mut().zip(&dxhat) {
                            *v = r * (d - mean_d - *v * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(v, m)| v * m).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape(), data)?);
            }
            Op::Sum(a) => {
                let gv = g.item();
                self.accumulate(grads, *a, Tensor::full(self.shape(*a), gv));
            }
        }
        Ok(())
    }

    /// Operation name of a node, for diagnostics.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to a node, if it required one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every parameter that took part in the graph and
    /// requires a gradient.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> + '_ {
        self.params
            .iter()
            .filter_map(|&(pid, v)| self.grads[v.0].as_ref().map(|g| (pid, g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0), true);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap().item(), 6.0);
    }

    #[test]
    fn constant_gets_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0), true);
        let c = g.constant(Tensor::scalar(2.0));
        let y = g.mul(x, c).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.wrt(c).is_none());
        assert_eq!(grads.wrt(x).unwrap().item(), 2.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2, 2]), true);
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn softmax_and_logsumexp_cases() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[1, 3], vec![0.0; 3]).unwrap());
        let s = g.softmax(x).unwrap();
        for &p in g.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = g.constant(Tensor::new(&[2], vec![1000.0, 1000.0]).unwrap());
        let l = g.logsumexp(big).unwrap();
        assert!((g.value(l).item() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let single = g.constant(Tensor::new(&[1], vec![-4.25]).unwrap());
        let l = g.logsumexp(single).unwrap();
        assert_eq!(g.value(l).item(), -4.25);
        let dom = g.constant(Tensor::new(&[2], vec![1.0, 1001.0]).unwrap());
        let s = g.softmax(dom).unwrap();
        assert!(g.value(s).data()[0] < 1e-300 && (g.value(s).data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[4, 4], 1.5));
        assert_eq!(g.dropout(x, 0.5), x);
    }

    #[test]
    fn dropout_is_seeded() {
        let run = || {
            let mut g = Graph::training(7);
            let x = g.constant(Tensor::full(&[8, 8], 1.0));
            let y = g.dropout(x, 0.3);
            g.value(y).clone()
        };
        assert_eq!(run(), run());
    }
}

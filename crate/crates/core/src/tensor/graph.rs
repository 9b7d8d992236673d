//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the tape order is already a topological order and
//! [`Graph::backward`] only has to walk it in reverse.

use std::collections::BTreeMap;

use super::array::{matmul_nt, matmul_raw, matmul_tn, Array};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    Detach,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>, usize),
    SliceCols(Var, usize, usize),
    Embedding(Var, Vec<usize>),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    Gather(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Array>>,
    params: BTreeMap<usize, Array>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`. Nodes the root does not
    /// depend on (or that sit behind a detach) get zeros.
    pub fn wrt(&self, g: &Graph, v: Var) -> Array {
        match &self.nodes[v.0] {
            Some(a) => a.clone(),
            None => Array::zeros(g.value(v).shape()),
        }
    }

    /// Accumulated gradient for parameter `id`, if it took part in the graph.
    pub fn param(&self, id: usize) -> Option<&Array> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &BTreeMap<usize, Array> {
        &self.params
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    (-x.abs()).exp().ln_1p() + x.max(0.0)
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows(a: &Array) -> Array {
    let (rows, cols) = a.rows_cols();
    let mut out = Vec::with_capacity(a.len());
    for r in 0..rows {
        let row = &a.data()[r * cols..(r + 1) * cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Array::from_raw(a.shape().to_vec(), out)
}

fn mat_dims(a: &Array, op: &'static str) -> Result<(usize, usize)> {
    if a.shape().len() != 2 {
        return Err(Error::shape(op, format!("expected rank 2, got {:?}", a.shape())));
    }
    Ok((a.shape()[0], a.shape()[1]))
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

    fn push(&mut self, op: Op, value: Array) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    pub fn constant(&mut self, a: Array) -> Var {
        self.push(Op::Constant, a)
    }

    /// Leaf that receives a gradient, tagged with a parameter id.
    pub fn param(&mut self, a: Array, id: usize) -> Var {
        self.push(Op::Param(id), a)
    }

    /// Same value, no gradient flows back through it.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.push(Op::Detach, v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = mat_dims(self.value(a), "matmul")?;
        let (k2, m) = mat_dims(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{n}×{k} · {k2}×{m}")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        Ok(self.push(Op::MatMul(a, b), Array::from_raw(vec![n, m], out)))
    }

    /// Elementwise sum. `b` may also be a row vector (`[m]` or `[1, m]`)
    /// added to every row of an `n×m` matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
            return Ok(self.push(Op::Add(a, b), v));
        }
        let (rows, cols) = self.value(a).rows_cols();
        let (brows, bcols) = self.value(b).rows_cols();
        if sa.len() == 2 && brows == 1 && bcols == cols && sb.len() <= 2 {
            let bd = self.value(b).data().to_vec();
            let mut out = self.value(a).data().to_vec();
            for r in 0..rows {
                for (o, bv) in out[r * cols..(r + 1) * cols].iter_mut().zip(&bd) {
                    *o += bv;
                }
            }
            let shape = sa.to_vec();
            return Ok(self.push(Op::AddRow(a, b), Array::from_raw(shape, out)));
        }
        Err(Error::shape("add", format!("{sa:?} + {sb:?}")))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// Concatenation along `axis`: axis 0 stacks rows (or joins vectors),
    /// axis 1 joins columns of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let first = self.value(parts[0]).shape().to_vec();
        let rank = first.len();
        if axis >= rank || rank > 2 {
            return Err(Error::shape("concat", format!("axis {axis} on rank {rank}")));
        }
        for p in parts {
            let s = self.value(*p).shape();
            if s.len() != rank || (rank == 2 && s[1 - axis] != first[1 - axis]) {
                return Err(Error::shape("concat", format!("{first:?} vs {s:?}")));
            }
        }
        let (shape, data) = if axis == 0 {
            let mut data = Vec::new();
            let mut n = 0;
            for p in parts {
                data.extend_from_slice(self.value(*p).data());
                n += self.value(*p).shape()[0];
            }
            let mut shape = first.clone();
            shape[0] = n;
            (shape, data)
        } else {
            let rows = first[0];
            let total: usize = parts.iter().map(|p| self.value(*p).shape()[1]).sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(self.value(*p).row(r));
                }
            }
            (vec![rows, total], data)
        };
        Ok(self.push(Op::Concat(parts.to_vec(), axis), Array::from_raw(shape, data)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = mat_dims(self.value(a), "slice")?;
        if start >= end || end > cols {
            return Err(Error::shape("slice", format!("{start}..{end} of {cols} columns")));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&src.row(r)[start..end]);
        }
        Ok(self.push(
            Op::SliceCols(a, start, end),
            Array::from_raw(vec![rows, end - start], data),
        ))
    }

    /// Rows of `table` selected by `ids`; output is `ids.len() × d`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = mat_dims(self.value(table), "embedding")?;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::IdOutOfRange { id, size: v });
            }
            data.extend_from_slice(self.value(table).row(id));
        }
        Ok(self.push(
            Op::Embedding(table, ids.to_vec()),
            Array::from_raw(vec![ids.len(), d], data),
        ))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(Op::Softplus(a), v)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = log_softmax_rows(self.value(a));
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Array::from_raw(vec![1], vec![s]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::shape("mean", "empty input"));
        }
        let s = self.value(a).data().iter().sum::<f64>() / n as f64;
        Ok(self.push(Op::Mean(a), Array::from_raw(vec![1], vec![s])))
    }

    /// Picks `logp[i, ids[i]]` for each `i`. A single-row `logp` is shared
    /// by every id. Output is a vector of length `ids.len()`.
    pub fn gather(&mut self, logp: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.value(logp).rows_cols();
        if rows != 1 && rows != ids.len() {
            return Err(Error::shape(
                "gather",
                format!("{rows} rows for {} ids", ids.len()),
            ));
        }
        let src = self.value(logp).data();
        let mut data = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if id >= cols {
                return Err(Error::IdOutOfRange { id, size: cols });
            }
            let r = if rows == 1 { 0 } else { i };
            data.push(src[r * cols + id]);
        }
        Ok(self.push(
            Op::Gather(logp, ids.to_vec()),
            Array::from_raw(vec![ids.len()], data),
        ))
    }

    /// Reverse accumulation from a scalar root. Gradients start from zero
    /// on every call, so repeated calls give identical results.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got {:?}", self.value(root).shape()),
            ));
        }
        let mut grads: Vec<Option<Array>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array::filled(self.value(root).shape(), 1.0));
        let mut params: BTreeMap<usize, Array> = BTreeMap::new();

        for i in (0..=root.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Detach => {}
                Op::Param(id) => match params.get_mut(id) {
                    Some(acc) => acc.add_assign(&gout),
                    None => {
                        params.insert(*id, gout.clone());
                    }
                },
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (n, k) = (va.shape()[0], va.shape()[1]);
                    let m = vb.shape()[1];
                    let ga = matmul_nt(gout.data(), vb.data(), n, m, k);
                    let gb = matmul_tn(va.data(), gout.data(), n, k, m);
                    accumulate(&mut grads, *a, Array::from_raw(vec![n, k], ga));
                    accumulate(&mut grads, *b, Array::from_raw(vec![k, m], gb));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, gout.clone());
                    accumulate(&mut grads, *b, gout.clone());
                }
                Op::AddRow(a, b) => {
                    let (rows, cols) = gout.rows_cols();
                    let mut gb = vec![0.0; cols];
                    for r in 0..rows {
                        for (acc, v) in gb.iter_mut().zip(gout.row(r)) {
                            *acc += v;
                        }
                    }
                    let bshape = self.value(*b).shape().to_vec();
                    accumulate(&mut grads, *a, gout.clone());
                    accumulate(&mut grads, *b, Array::from_raw(bshape, gb));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, gout.clone());
                    accumulate(&mut grads, *b, gout.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    let ga = gout.zip_map(self.value(*b), |g, y| g * y);
                    let gb = gout.zip_map(self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, gout.map(|g| g * c));
                }
                Op::Concat(parts, axis) => {
                    if *axis == 0 {
                        let mut off = 0;
                        for p in parts {
                            let n = self.value(*p).len();
                            let shape = self.value(*p).shape().to_vec();
                            let piece = gout.data()[off..off + n].to_vec();
                            accumulate(&mut grads, *p, Array::from_raw(shape, piece));
                            off += n;
                        }
                    } else {
                        let rows = gout.shape()[0];
                        let mut col = 0;
                        for p in parts {
                            let w = self.value(*p).shape()[1];
                            let mut piece = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                piece.extend_from_slice(&gout.row(r)[col..col + w]);
                            }
                            accumulate(&mut grads, *p, Array::from_raw(vec![rows, w], piece));
                            col += w;
                        }
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let src = self.value(*a);
                    let (rows, cols) = (src.shape()[0], src.shape()[1]);
                    let mut g = vec![0.0; rows * cols];
                    let w = end - start;
                    for r in 0..rows {
                        g[r * cols + start..r * cols + end]
                            .copy_from_slice(&gout.data()[r * w..(r + 1) * w]);
                    }
                    accumulate(&mut grads, *a, Array::from_raw(vec![rows, cols], g));
                }
                Op::Embedding(table, ids) => {
                    let shape = self.value(*table).shape().to_vec();
                    let d = shape[1];
                    let mut g = vec![0.0; shape[0] * d];
                    for (i, &id) in ids.iter().enumerate() {
                        for (acc, v) in g[id * d..(id + 1) * d].iter_mut().zip(gout.row(i)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *table, Array::from_raw(shape, g));
                }
                Op::Tanh(a) => {
                    let g = gout.zip_map(&node.value, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads, *a, g);
                }
                Op::Sigmoid(a) => {
                    let g = gout.zip_map(&node.value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads, *a, g);
                }
                Op::Softplus(a) => {
                    let g = gout.zip_map(self.value(*a), |g, x| g * sigmoid(x));
                    accumulate(&mut grads, *a, g);
                }
                Op::LogSoftmax(a) => {
                    // dx = g - softmax * sum(g) per row
                    let (rows, cols) = gout.rows_cols();
                    let mut g = Vec::with_capacity(gout.len());
                    for r in 0..rows {
                        let grow = gout.row(r);
                        let yrow = node.value.row(r);
                        let s: f64 = grow.iter().sum();
                        g.extend(
                            grow.iter()
                                .zip(yrow)
                                .take(cols)
                                .map(|(gv, y)| gv - y.exp() * s),
                        );
                    }
                    accumulate(&mut grads, *a, Array::from_raw(node.value.shape().to_vec(), g));
                }
                Op::Sum(a) => {
                    let s = gout.data()[0];
                    accumulate(&mut grads, *a, Array::filled(self.value(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    let s = gout.data()[0] / n;
                    accumulate(&mut grads, *a, Array::filled(self.value(*a).shape(), s));
                }
                Op::Gather(logp, ids) => {
                    let src = self.value(*logp);
                    let (rows, cols) = src.rows_cols();
                    let mut g = vec![0.0; src.len()];
                    for (i, &id) in ids.iter().enumerate() {
                        let r = if rows == 1 { 0 } else { i };
                        g[r * cols + id] += gout.data()[i];
                    }
                    accumulate(&mut grads, *logp, Array::from_raw(src.shape().to_vec(), g));
                }
            }
            grads[i] = Some(gout);
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

fn accumulate(grads: &mut [Option<Array>], v: Var, g: Array) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

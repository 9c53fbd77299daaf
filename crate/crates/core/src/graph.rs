//! Eager computation graph with reverse-mode differentiation.
//!
//! Every op computes its value immediately and records enough structure to
//! replay the chain rule in reverse. A graph is built for one forward pass
//! (one example or one mini-batch chunk), backpropagated once, then dropped.
//! Gradients land in the bound [`Param`] accumulators, summing across
//! backward calls until the caller zeroes them.
//!
//! All math is `f64`; finite-difference verification at the tolerances used
//! here is not feasible in single precision.

use std::collections::HashMap;

use crate::tensor::{Param, Tensor};
use crate::NumericError;

/// Handle to a node inside one [`Graph`]. Not valid across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Leaf: constant input or a bound parameter.
    Leaf,
    /// `[m,k] · [k,n] -> [m,n]`
    Matmul { a: NodeId, b: NodeId },
    /// `[r,c] · [c] -> [r]`
    MatVec { m: NodeId, v: NodeId },
    /// Element-wise sum of same-shape nodes.
    Add { a: NodeId, b: NodeId },
    /// Element-wise product of same-shape nodes.
    Mul { a: NodeId, b: NodeId },
    /// Multiply every element by a constant.
    Scale { x: NodeId, c: f64 },
    /// `[n] · [n] -> [1]`
    Dot { a: NodeId, b: NodeId },
    /// Row `i` of `[n,d]` scaled by `s[i]` -> `[n,d]`.
    ScaleRows { m: NodeId, s: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    LeakyRelu { x: NodeId, slope: f64 },
    /// Valid 1-D convolution over the row axis.
    /// input `[n,c]`, kernels `[k, h*c]`, bias `[k]` -> `[n-h+1, k]`.
    Conv1d { input: NodeId, kernels: NodeId, bias: NodeId, h: usize },
    /// Concatenate 1-D nodes into one vector.
    Concat { parts: Vec<NodeId> },
    /// `[r,c] -> [r*c]`, row-major.
    Flatten { x: NodeId },
    /// Stack `n` vectors of length `d` into `[n,d]`.
    StackRows { rows: Vec<NodeId> },
    /// Row `i` of `[n,d]` -> `[d]`.
    RowSlice { m: NodeId, i: usize },
    /// Mean of selected rows of `[b,d]` -> `[d]`. Repeated indices count twice.
    GatherMeanRows { table: NodeId, rows: Vec<usize> },
    /// Sum of all elements -> `[1]`.
    Sum { x: NodeId },
    /// Softmax over a vector -> same length.
    Softmax { x: NodeId },
    /// Mean binary cross-entropy of predictions `[n]` against fixed labels.
    /// Predictions are clamped to `[eps, 1-eps]`, eps = 1e-12.
    BceMean { preds: NodeId, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    op: Op,
}

/// One forward pass worth of recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// Node index -> bound parameter, for gradient write-back.
    bound: Vec<(usize, Param)>,
    /// Dedup map so a parameter used twice shares one leaf.
    param_nodes: HashMap<usize, NodeId>,
    /// Node gradients from the most recent backward pass.
    grads: Vec<Vec<f64>>,
}

const BCE_EPS: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { shape, values, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].values.len(), 1);
        self.nodes[id.0].values[0]
    }

    /// Node gradient from the last backward pass, if one ran.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).map(Vec::as_slice)
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        let shape = tensor.shape().to_vec();
        let values = tensor.values().to_vec();
        self.push(shape, values, Op::Leaf)
    }

    pub fn constant_vector(&mut self, values: Vec<f64>) -> NodeId {
        self.push(vec![values.len()], values, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.push(vec![1], vec![v], Op::Leaf)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> NodeId {
        let numel = shape.iter().product();
        self.push(shape, vec![0.0; numel], Op::Leaf)
    }

    /// Bind a trainable parameter. Repeated binds of the same parameter
    /// return the same leaf so its gradient sums over every use.
    pub fn param(&mut self, p: &Param) -> NodeId {
        if let Some(&id) = self.param_nodes.get(&p.ptr_id()) {
            return id;
        }
        let t = p.borrow();
        let id = self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf);
        drop(t);
        self.bound.push((id.0, p.clone()));
        self.param_nodes.insert(p.ptr_id(), id);
        id
    }

    // ── Shape helpers ───────────────────────────────────────────────────

    fn want_rank2(&self, op: &'static str, id: NodeId) -> Result<(usize, usize), NumericError> {
        match self.shape(id) {
            [r, c] => Ok((*r, *c)),
            other => Err(NumericError::Contract {
                op,
                msg: format!("expected a matrix, got shape {other:?}"),
            }),
        }
    }

    fn want_rank1(&self, op: &'static str, id: NodeId) -> Result<usize, NumericError> {
        match self.shape(id) {
            [n] => Ok(*n),
            other => Err(NumericError::Contract {
                op,
                msg: format!("expected a vector, got shape {other:?}"),
            }),
        }
    }

    // ── Ops ─────────────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let (m, k) = self.want_rank2("matmul", a)?;
        let (k2, n) = self.want_rank2("matmul", b)?;
        if k != k2 {
            return Err(NumericError::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = av[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += aik * bv[kk * n + j];
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::Matmul { a, b }))
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, NumericError> {
        let (r, c) = self.want_rank2("matvec", m)?;
        let n = self.want_rank1("matvec", v)?;
        if c != n {
            return Err(NumericError::DimensionMismatch {
                op: "matvec",
                lhs: self.shape(m).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        let mv = self.value(m);
        let vv = self.value(v);
        let out: Vec<f64> = (0..r)
            .map(|i| (0..c).map(|j| mv[i * c + j] * vv[j]).sum())
            .collect();
        Ok(self.push(vec![r], out, Op::MatVec { m, v }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericError::DimensionMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericError::DimensionMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Scale { x, c })
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let n = self.want_rank1("dot", a)?;
        let n2 = self.want_rank1("dot", b)?;
        if n != n2 {
            return Err(NumericError::DimensionMismatch {
                op: "dot",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let s: f64 = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(vec![1], vec![s], Op::Dot { a, b }))
    }

    pub fn scale_rows(&mut self, m: NodeId, s: NodeId) -> Result<NodeId, NumericError> {
        let (r, c) = self.want_rank2("scale_rows", m)?;
        let n = self.want_rank1("scale_rows", s)?;
        if r != n {
            return Err(NumericError::DimensionMismatch {
                op: "scale_rows",
                lhs: self.shape(m).to_vec(),
                rhs: self.shape(s).to_vec(),
            });
        }
        let mv = self.value(m);
        let sv = self.value(s);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = sv[i] * mv[i * c + j];
            }
        }
        Ok(self.push(vec![r, c], out, Op::ScaleRows { m, s }))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Tanh { x })
    }

    /// `x` for `x >= 0`, `slope * x` otherwise.
    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId, NumericError> {
        if !(0.0 < slope && slope < 1.0) {
            return Err(NumericError::Contract {
                op: "leaky_relu",
                msg: format!("slope must be in (0,1), got {slope}"),
            });
        }
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::LeakyRelu { x, slope }))
    }

    /// Valid convolution over the row axis. `input [n,c]`, `kernels [k, h*c]`,
    /// `bias [k]`; output `[n-h+1, k]` with
    /// `out[t,i] = bias[i] + sum_{dt,j} kernels[i, dt*c+j] * input[t+dt, j]`.
    pub fn conv1d_valid(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        h: usize,
    ) -> Result<NodeId, NumericError> {
        let (n, c) = self.want_rank2("conv1d_valid", input)?;
        let (k, hc) = self.want_rank2("conv1d_valid", kernels)?;
        let kb = self.want_rank1("conv1d_valid", bias)?;
        if h == 0 || hc != h * c {
            return Err(NumericError::DimensionMismatch {
                op: "conv1d_valid",
                lhs: self.shape(input).to_vec(),
                rhs: self.shape(kernels).to_vec(),
            });
        }
        if kb != k {
            return Err(NumericError::DimensionMismatch {
                op: "conv1d_valid",
                lhs: self.shape(kernels).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        if n < h {
            return Err(NumericError::Contract {
                op: "conv1d_valid",
                msg: format!("input has {n} rows, kernel height {h} needs at least {h}"),
            });
        }
        let rows = n - h + 1;
        let iv = self.value(input);
        let kv = self.value(kernels);
        let bv = self.value(bias);
        let mut out = vec![0.0; rows * k];
        for t in 0..rows {
            for i in 0..k {
                let mut acc = bv[i];
                for dt in 0..h {
                    for j in 0..c {
                        acc += kv[i * hc + dt * c + j] * iv[(t + dt) * c + j];
                    }
                }
                out[t * k + i] = acc;
            }
        }
        Ok(self.push(vec![rows, k], out, Op::Conv1d { input, kernels, bias, h }))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::Contract { op: "concat", msg: "no parts".to_string() });
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() > 1 {
                return Err(NumericError::Contract {
                    op: "concat",
                    msg: format!("parts must be vectors, got shape {:?}", self.shape(p)),
                });
            }
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        let (r, c) = self.want_rank2("flatten", x)?;
        let out = self.value(x).to_vec();
        Ok(self.push(vec![r * c], out, Op::Flatten { x }))
    }

    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, NumericError> {
        if rows.is_empty() {
            return Err(NumericError::Contract { op: "stack_rows", msg: "no rows".to_string() });
        }
        let d = self.want_rank1("stack_rows", rows[0])?;
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let len = self.want_rank1("stack_rows", r)?;
            if len != d {
                return Err(NumericError::DimensionMismatch {
                    op: "stack_rows",
                    lhs: vec![d],
                    rhs: vec![len],
                });
            }
            out.extend_from_slice(self.value(r));
        }
        Ok(self.push(vec![rows.len(), d], out, Op::StackRows { rows: rows.to_vec() }))
    }

    pub fn row(&mut self, m: NodeId, i: usize) -> Result<NodeId, NumericError> {
        let (r, c) = self.want_rank2("row", m)?;
        if i >= r {
            return Err(NumericError::Contract {
                op: "row",
                msg: format!("row {i} out of bounds for {r} rows"),
            });
        }
        let out = self.value(m)[i * c..(i + 1) * c].to_vec();
        Ok(self.push(vec![c], out, Op::RowSlice { m, i }))
    }

    pub fn gather_mean_rows(
        &mut self,
        table: NodeId,
        rows: &[usize],
    ) -> Result<NodeId, NumericError> {
        let (b, d) = self.want_rank2("gather_mean_rows", table)?;
        if rows.is_empty() {
            return Err(NumericError::Contract {
                op: "gather_mean_rows",
                msg: "no rows selected".to_string(),
            });
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= b) {
            return Err(NumericError::Contract {
                op: "gather_mean_rows",
                msg: format!("row {bad} out of bounds for {b} rows"),
            });
        }
        let tv = self.value(table);
        let inv = 1.0 / rows.len() as f64;
        let mut out = vec![0.0; d];
        for &r in rows {
            for j in 0..d {
                out[j] += tv[r * d + j];
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(self.push(vec![d], out, Op::GatherMeanRows { table, rows: rows.to_vec() }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).iter().sum();
        self.push(vec![1], vec![s], Op::Sum { x })
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        let n = self.want_rank1("softmax", x)?;
        let xv = self.value(x);
        let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out: Vec<f64> = exps.iter().map(|e| e / total).collect();
        Ok(self.push(vec![n], out, Op::Softmax { x }))
    }

    /// Mean binary cross-entropy. Labels must be 0 or 1; predictions are
    /// clamped to `[1e-12, 1 - 1e-12]` before the logs.
    pub fn bce_mean(&mut self, preds: NodeId, labels: &[f64]) -> Result<NodeId, NumericError> {
        let n = self.want_rank1("bce_mean", preds)?;
        if n != labels.len() {
            return Err(NumericError::Contract {
                op: "bce_mean",
                msg: format!("{n} predictions vs {} labels", labels.len()),
            });
        }
        if n == 0 {
            return Err(NumericError::Contract { op: "bce_mean", msg: "empty batch".to_string() });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(NumericError::Contract {
                op: "bce_mean",
                msg: format!("label {bad} is not 0 or 1"),
            });
        }
        let pv = self.value(preds);
        let mut total = 0.0;
        for (&p, &y) in pv.iter().zip(labels) {
            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total += y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        let loss = -total / n as f64;
        Ok(self.push(vec![1], vec![loss], Op::BceMean { preds, labels: labels.to_vec() }))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar root. Node gradients are recomputed
    /// from scratch; bound parameter accumulators receive `+=`, so calling
    /// this twice on one graph doubles every parameter gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericError> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(NumericError::Contract {
                op: "backward",
                msg: format!("root must be scalar, got shape {:?}", self.shape(loss)),
            });
        }
        let mut grads: Vec<Vec<f64>> =
            self.nodes.iter().map(|n| vec![0.0; n.values.len()]).collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if grads[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            // Take the output grad out to appease the borrow checker while
            // scattering into input grads.
            let d_out = std::mem::take(&mut grads[idx]);
            self.backward_op(idx, &d_out, &mut grads);
            grads[idx] = d_out;
        }

        for (node_idx, param) in &self.bound {
            param.borrow_mut().add_to_grad(&grads[*node_idx]);
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_op(&self, idx: usize, d_out: &[f64], grads: &mut [Vec<f64>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}

            Op::Matmul { a, b } => {
                let [m, k] = self.shape(*a) else { unreachable!() };
                let n = self.shape(*b)[1];
                let (m, k, n) = (*m, *k, n);
                let av = self.value(*a);
                let bv = self.value(*b);
                // dA = dOut · Bᵀ
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += d_out[i * n + j] * bv[kk * n + j];
                        }
                        grads[a.0][i * k + kk] += acc;
                    }
                }
                // dB = Aᵀ · dOut
                for kk in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += av[i * k + kk] * d_out[i * n + j];
                        }
                        grads[b.0][kk * n + j] += acc;
                    }
                }
            }

            Op::MatVec { m, v } => {
                let [r, c] = self.shape(*m) else { unreachable!() };
                let (r, c) = (*r, *c);
                let mv = self.value(*m);
                let vv = self.value(*v);
                for i in 0..r {
                    let di = d_out[i];
                    for j in 0..c {
                        grads[m.0][i * c + j] += di * vv[j];
                        grads[v.0][j] += di * mv[i * c + j];
                    }
                }
            }

            Op::Add { a, b } => {
                for (g, d) in grads[a.0].iter_mut().zip(d_out) {
                    *g += d;
                }
                for (g, d) in grads[b.0].iter_mut().zip(d_out) {
                    *g += d;
                }
            }

            Op::Mul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                for (i, d) in d_out.iter().enumerate() {
                    grads[a.0][i] += d * bv[i];
                    grads[b.0][i] += d * av[i];
                }
            }

            Op::Scale { x, c } => {
                for (g, d) in grads[x.0].iter_mut().zip(d_out) {
                    *g += c * d;
                }
            }

            Op::Dot { a, b } => {
                let d = d_out[0];
                let av = self.value(*a);
                let bv = self.value(*b);
                for i in 0..av.len() {
                    grads[a.0][i] += d * bv[i];
                    grads[b.0][i] += d * av[i];
                }
            }

            Op::ScaleRows { m, s } => {
                let [r, c] = self.shape(*m) else { unreachable!() };
                let (r, c) = (*r, *c);
                let mv = self.value(*m);
                let sv = self.value(*s);
                for i in 0..r {
                    for j in 0..c {
                        grads[m.0][i * c + j] += sv[i] * d_out[i * c + j];
                        grads[s.0][i] += mv[i * c + j] * d_out[i * c + j];
                    }
                }
            }

            Op::Sigmoid { x } => {
                let out = &self.nodes[idx].values;
                for (i, d) in d_out.iter().enumerate() {
                    grads[x.0][i] += d * out[i] * (1.0 - out[i]);
                }
            }

            Op::Tanh { x } => {
                let out = &self.nodes[idx].values;
                for (i, d) in d_out.iter().enumerate() {
                    grads[x.0][i] += d * (1.0 - out[i] * out[i]);
                }
            }

            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                for (i, d) in d_out.iter().enumerate() {
                    grads[x.0][i] += d * if xv[i] >= 0.0 { 1.0 } else { *slope };
                }
            }

            Op::Conv1d { input, kernels, bias, h } => {
                let [_, c] = self.shape(*input) else { unreachable!() };
                let [k, hc] = self.shape(*kernels) else { unreachable!() };
                let (c, k, hc, h) = (*c, *k, *hc, *h);
                let rows = self.nodes[idx].shape[0];
                let iv = self.value(*input);
                let kv = self.value(*kernels);
                for t in 0..rows {
                    for i in 0..k {
                        let d = d_out[t * k + i];
                        if d == 0.0 {
                            continue;
                        }
                        grads[bias.0][i] += d;
                        for dt in 0..h {
                            for j in 0..c {
                                grads[kernels.0][i * hc + dt * c + j] += d * iv[(t + dt) * c + j];
                                grads[input.0][(t + dt) * c + j] += d * kv[i * hc + dt * c + j];
                            }
                        }
                    }
                }
            }

            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].values.len();
                    for i in 0..len {
                        grads[p.0][i] += d_out[offset + i];
                    }
                    offset += len;
                }
            }

            Op::Flatten { x } => {
                for (g, d) in grads[x.0].iter_mut().zip(d_out) {
                    *g += d;
                }
            }

            Op::StackRows { rows } => {
                let d = self.nodes[idx].shape[1];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..d {
                        grads[r.0][j] += d_out[i * d + j];
                    }
                }
            }

            Op::RowSlice { m, i } => {
                let c = self.shape(*m)[1];
                for j in 0..c {
                    grads[m.0][i * c + j] += d_out[j];
                }
            }

            Op::GatherMeanRows { table, rows } => {
                let d = self.nodes[idx].values.len();
                let inv = 1.0 / rows.len() as f64;
                for &r in rows {
                    for j in 0..d {
                        grads[table.0][r * d + j] += d_out[j] * inv;
                    }
                }
            }

            Op::Sum { x } => {
                let d = d_out[0];
                for g in grads[x.0].iter_mut() {
                    *g += d;
                }
            }

            Op::Softmax { x } => {
                let out = &self.nodes[idx].values;
                let dot: f64 = d_out.iter().zip(out).map(|(d, o)| d * o).sum();
                for i in 0..out.len() {
                    grads[x.0][i] += out[i] * (d_out[i] - dot);
                }
            }

            Op::BceMean { preds, labels } => {
                let d = d_out[0];
                let pv = self.value(*preds);
                let n = labels.len() as f64;
                for (i, (&p, &y)) in pv.iter().zip(labels).enumerate() {
                    // Inside the clamp range the loss is flat in p, so the
                    // gradient there is exactly zero.
                    if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                        continue;
                    }
                    grads[preds.0][i] += d * -(y / p - (1.0 - y) / (1.0 - p)) / n;
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

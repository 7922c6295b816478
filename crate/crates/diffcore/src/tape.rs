//! Operation recording and the reverse pass.
//!
//! Every forward operation appends one node to the [`Tape`]. Nodes are only
//! ever appended, so recording order is a topological order of the graph and
//! the reverse pass is a single sweep from the loss back to the leaves.
//!
//! Leaf values are held behind `Arc`, so binding a large parameter block onto
//! a tape does not copy it.

use std::sync::Arc;

use crate::error::{DiffError, Result};
use crate::tensor::Tensor;

/// Magnitude floor applied to `log` inputs and `div` denominators.
pub const GUARD_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Softplus,
    Square,
    Negate,
    Clamp(f64, f64),
    Scale(f64),
    AddConst(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Unary(Var, UnaryOp),
    Binary(Var, Var, BinaryOp),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    GaussianSample(Var, Var, Var),
    KlDiag([Var; 4]),
    GatherSum {
        table: Var,
        indices: Arc<Vec<u32>>,
        per_row: usize,
    },
    CategoricalNll {
        logits: Var,
        targets: Arc<Vec<u8>>,
        classes: usize,
        /// Softmax of the logits, kept only when they need a gradient.
        probs: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    /// True when any gradient can flow into this node.
    needs_grad: bool,
    /// True only for leaves created with `requires_grad`.
    requires_grad: bool,
}

/// Recording of a computation, in evaluation order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and gradient.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    /// Drops nodes recorded after `len`, keeping earlier ones (and their values).
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.truncate(len);
    }

    /// Clears accumulated gradients, keeping the recording.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_shared(Arc::new(value), op, needs_grad, false)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_shared(Arc::new(value), Op::Leaf, requires_grad, requires_grad)
    }

    /// Leaf sharing storage with `value`.
    pub fn leaf_shared(&mut self, value: &Arc<Tensor>, requires_grad: bool) -> Var {
        self.push_shared(Arc::clone(value), Op::Leaf, requires_grad, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value), false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a `requires_grad` leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient as a tensor shaped like the node, zeros when none was accumulated.
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let shape = self.shape(v).to_vec();
        match self.grad(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(&shape),
        }
    }

    /// A new leaf holding the same value with no gradient path back.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = Arc::clone(&self.nodes[v.0].value);
        self.push_shared(value, Op::Leaf, false, false)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ---------------------------------------------------------------- forward ops

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), k, 1, tb.data(), n, 1, &mut out, 0.0);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), ng))
    }

    /// Adds a bias row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let cols = tx.cols();
        if tb.len() != cols {
            return Err(DiffError::ShapeMismatch {
                op: "add_row",
                left: tx.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(cols) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let shape = tx.shape().to_vec();
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRow(x, bias), ng))
    }

    pub fn unary(&mut self, x: Var, op: UnaryOp) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| unary_forward(op, v)).collect();
        let shape = tx.shape().to_vec();
        let ng = self.ng(x);
        self.push(Tensor::new(shape, data).expect("same shape"), Op::Unary(x, op), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Log)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Softplus)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Square)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, UnaryOp::Negate)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, UnaryOp::Clamp(lo, hi))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, UnaryOp::Scale(c))
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, UnaryOp::AddConst(c))
    }

    /// Elementwise binary op. Shapes must match unless one side is a scalar.
    pub fn binary(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.is_scalar() {
            ta.shape().to_vec()
        } else if ta.is_scalar() {
            tb.shape().to_vec()
        } else {
            return Err(DiffError::ShapeMismatch {
                op: "binary",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        };
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let (sa, sb) = (da.len() == 1, db.len() == 1);
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let x = if sa { da[0] } else { da[i] };
                let y = if sb { db[0] } else { db[i] };
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / guard(y),
                }
            })
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Binary(a, b, op), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Div)
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(DiffError::Invalid {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let rows = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(*first).to_vec(),
                    right: self.shape(*p).to_vec(),
                });
            }
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Columns `start..start + width` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let tx = self.value(x);
        let cols = tx.cols();
        if width == 0 || start + width > cols {
            return Err(DiffError::Invalid {
                op: "slice_cols",
                msg: format!("columns {start}..{} out of 0..{cols}", start + width),
            });
        }
        let rows = tx.rows();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&tx.row_slice(r)[start..start + width]);
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(rows, width, out)?, Op::SliceCols(x, start), ng))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(DiffError::Invalid {
            op: "concat_rows",
            msg: "no inputs".into(),
        })?;
        let cols = self.value(*first).cols();
        let mut out = Vec::new();
        for p in parts {
            let tp = self.value(*p);
            if tp.cols() != cols {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(*first).to_vec(),
                    right: self.shape(*p).to_vec(),
                });
            }
            out.extend_from_slice(tp.data());
        }
        let rows = out.len() / cols;
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Rows `start..start + count` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        if count == 0 || start + count > rows {
            return Err(DiffError::Invalid {
                op: "slice_rows",
                msg: format!("rows {start}..{} out of 0..{rows}", start + count),
            });
        }
        let out = tx.data()[start * cols..(start + count) * cols].to_vec();
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(count, cols, out)?, Op::SliceRows(x, start), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Row sums: `m × n → m × 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let rows = t.rows();
        let out: Vec<f64> = (0..rows).map(|r| t.row_slice(r).iter().sum()).collect();
        let ng = self.ng(x);
        self.push(Tensor::matrix(rows, 1, out).expect("rows > 0"), Op::SumCols(x), ng)
    }

    /// Reparameterized draw `mean + std ⊙ noise`; `noise` is treated as a constant.
    ///
    /// A zero `std` is accepted as the deterministic limit; negative or
    /// non-finite values are rejected.
    pub fn gaussian_sample(&mut self, mean: Var, std: Var, noise: Var) -> Result<Var> {
        let (tm, ts, tn) = (self.value(mean), self.value(std), self.value(noise));
        if tm.shape() != ts.shape() || tm.shape() != tn.shape() {
            return Err(DiffError::ShapeMismatch {
                op: "gaussian_sample",
                left: tm.shape().to_vec(),
                right: ts.shape().to_vec(),
            });
        }
        if ts.data().iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(DiffError::NonPositiveStd {
                op: "gaussian_sample",
            });
        }
        let data: Vec<f64> = tm
            .data()
            .iter()
            .zip(ts.data())
            .zip(tn.data())
            .map(|((m, s), e)| m + s * e)
            .collect();
        let shape = tm.shape().to_vec();
        let ng = self.ng(mean) || self.ng(std);
        Ok(self.push(Tensor::new(shape, data)?, Op::GaussianSample(mean, std, noise), ng))
    }

    /// `KL(N(mean_q, std_q²) ‖ N(mean_p, std_p²))` summed over every element.
    pub fn kl_diag_gaussians(&mut self, mean_q: Var, std_q: Var, mean_p: Var, std_p: Var) -> Result<Var> {
        let shape = self.shape(mean_q).to_vec();
        for v in [std_q, mean_p, std_p] {
            if self.shape(v) != shape.as_slice() {
                return Err(DiffError::ShapeMismatch {
                    op: "kl_diag_gaussians",
                    left: shape,
                    right: self.shape(v).to_vec(),
                });
            }
        }
        let (mq, sq, mp, sp) = (
            self.value(mean_q).data(),
            self.value(std_q).data(),
            self.value(mean_p).data(),
            self.value(std_p).data(),
        );
        if sq.iter().chain(sp).any(|s| !(*s > 0.0)) {
            return Err(DiffError::NonPositiveStd {
                op: "kl_diag_gaussians",
            });
        }
        let total: f64 = (0..mq.len())
            .map(|i| {
                let d = mq[i] - mp[i];
                (sp[i] / sq[i]).ln() + (sq[i] * sq[i] + d * d) / (2.0 * sp[i] * sp[i]) - 0.5
            })
            .sum();
        let ng = [mean_q, std_q, mean_p, std_p].iter().any(|v| self.ng(*v));
        Ok(self.push(
            Tensor::scalar(total),
            Op::KlDiag([mean_q, std_q, mean_p, std_p]),
            ng,
        ))
    }

    /// Sparse product of a multi-hot input with `table`: row `i` of the output is
    /// the sum of table rows `indices[i * per_row .. (i + 1) * per_row]`.
    pub fn gather_sum(&mut self, table: Var, indices: Arc<Vec<u32>>, per_row: usize) -> Result<Var> {
        let tt = self.value(table);
        if per_row == 0 || indices.len() % per_row != 0 || indices.is_empty() {
            return Err(DiffError::Invalid {
                op: "gather_sum",
                msg: format!("{} indices do not split into rows of {per_row}", indices.len()),
            });
        }
        let (vocab, width) = (tt.rows(), tt.cols());
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= vocab) {
            return Err(DiffError::Invalid {
                op: "gather_sum",
                msg: format!("index {bad} outside table of {vocab} rows"),
            });
        }
        let rows = indices.len() / per_row;
        let mut out = vec![0.0; rows * width];
        let td = tt.data();
        for (r, idx) in indices.chunks(per_row).enumerate() {
            let dst = &mut out[r * width..(r + 1) * width];
            for &i in idx {
                let src = &td[i as usize * width..(i as usize + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::matrix(rows, width, out)?,
            Op::GatherSum {
                table,
                indices,
                per_row,
            },
            ng,
        ))
    }

    /// Mean per-group softmax cross-entropy.
    ///
    /// `logits` is `m × (G·classes)` with each group of `classes` logits
    /// contiguous; `targets` holds `m·G` class ids.
    pub fn categorical_nll(&mut self, logits: Var, targets: Arc<Vec<u8>>, classes: usize) -> Result<Var> {
        let tl = self.value(logits);
        if classes == 0 || tl.len() != targets.len() * classes {
            return Err(DiffError::Invalid {
                op: "categorical_nll",
                msg: format!(
                    "{} logits do not match {} targets of {classes} classes",
                    tl.len(),
                    targets.len()
                ),
            });
        }
        if targets.iter().any(|&t| t as usize >= classes) {
            return Err(DiffError::Invalid {
                op: "categorical_nll",
                msg: "target class out of range".into(),
            });
        }
        let ng = self.ng(logits);
        let mut probs = if ng { Some(vec![0.0; tl.len()]) } else { None };
        let mut total = 0.0;
        for (i, (g, &t)) in tl.data().chunks(classes).zip(targets.iter()).enumerate() {
            let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            match probs.as_mut() {
                Some(p) => {
                    let p = &mut p[i * classes..(i + 1) * classes];
                    for (pc, &x) in p.iter_mut().zip(g) {
                        *pc = (x - max).exp();
                        sum += *pc;
                    }
                    p.iter_mut().for_each(|pc| *pc /= sum);
                }
                None => sum = g.iter().map(|x| (x - max).exp()).sum(),
            }
            total += max + sum.ln() - g[t as usize];
        }
        Ok(self.push(
            Tensor::scalar(total / targets.len() as f64),
            Op::CategoricalNll {
                logits,
                targets,
                classes,
                probs,
            },
            ng,
        ))
    }

    // ---------------------------------------------------------------- backward

    /// Accumulates `d loss / d leaf` into every `requires_grad` leaf reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(DiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[loss.0] = Some(vec![1.0]);
        for id in (0..n).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if node.requires_grad {
                match &mut self.grads[id] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g.clone()),
                }
            }
            self.propagate(id, &g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.ng(*a) {
                    // dA = dC · Bᵀ
                    let da = slot(adj, *a, m * k);
                    gemm(m, n, k, g, n, 1, tb.data(), 1, n, da, 1.0);
                }
                if self.ng(*b) {
                    // dB = Aᵀ · dC
                    let db = slot(adj, *b, k * n);
                    gemm(k, m, n, ta.data(), 1, k, g, n, 1, db, 1.0);
                }
            }
            Op::AddRow(x, b) => {
                if self.ng(*x) {
                    let dx = slot(adj, *x, g.len());
                    dx.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if self.ng(*b) {
                    let cols = out.cols();
                    let db = slot(adj, *b, cols);
                    for row in g.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Unary(x, op) => {
                if self.ng(*x) {
                    let xs = self.value(*x).data();
                    let ys = out.data();
                    let dx = slot(adj, *x, g.len());
                    for i in 0..g.len() {
                        dx[i] += g[i] * unary_derivative(*op, xs[i], ys[i]);
                    }
                }
            }
            Op::Binary(a, b, op) => {
                let (da_, db_) = (self.value(*a).data(), self.value(*b).data());
                let (sa, sb) = (da_.len() == 1 && g.len() > 1, db_.len() == 1 && g.len() > 1);
                let at = |i: usize| if sa { da_[0] } else { da_[i] };
                let bt = |i: usize| if sb { db_[0] } else { db_[i] };
                if self.ng(*a) {
                    let d = slot(adj, *a, da_.len());
                    for i in 0..g.len() {
                        let local = match op {
                            BinaryOp::Add | BinaryOp::Sub => 1.0,
                            BinaryOp::Mul => bt(i),
                            BinaryOp::Div => 1.0 / guard(bt(i)),
                        };
                        d[if sa { 0 } else { i }] += g[i] * local;
                    }
                }
                if self.ng(*b) {
                    let d = slot(adj, *b, db_.len());
                    for i in 0..g.len() {
                        let local = match op {
                            BinaryOp::Add => 1.0,
                            BinaryOp::Sub => -1.0,
                            BinaryOp::Mul => at(i),
                            BinaryOp::Div => {
                                let y = bt(i);
                                if y.abs() < GUARD_EPS {
                                    0.0
                                } else {
                                    -at(i) / (y * y)
                                }
                            }
                        };
                        d[if sb { 0 } else { i }] += g[i] * local;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.ng(*p) {
                        let d = slot(adj, *p, rows * w);
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            d[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                if self.ng(*x) {
                    let tx = self.value(*x);
                    let (rows, cols, w) = (tx.rows(), tx.cols(), out.cols());
                    let d = slot(adj, *x, rows * cols);
                    for r in 0..rows {
                        let dst = &mut d[r * cols + start..r * cols + start + w];
                        dst.iter_mut().zip(&g[r * w..(r + 1) * w]).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.ng(*p) {
                        let d = slot(adj, *p, len);
                        d.iter_mut().zip(&g[offset..offset + len]).for_each(|(a, b)| *a += b);
                    }
                    offset += len;
                }
            }
            Op::SliceRows(x, start) => {
                if self.ng(*x) {
                    let tx = self.value(*x);
                    let cols = tx.cols();
                    let d = slot(adj, *x, tx.len());
                    d[start * cols..start * cols + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, b)| *a += b);
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                if self.ng(*x) {
                    let len = self.value(*x).len();
                    let scale = if matches!(node.op, Op::Mean(_)) {
                        g[0] / len as f64
                    } else {
                        g[0]
                    };
                    slot(adj, *x, len).iter_mut().for_each(|d| *d += scale);
                }
            }
            Op::SumCols(x) => {
                if self.ng(*x) {
                    let tx = self.value(*x);
                    let cols = tx.cols();
                    let d = slot(adj, *x, tx.len());
                    for (r, row) in d.chunks_mut(cols).enumerate() {
                        row.iter_mut().for_each(|v| *v += g[r]);
                    }
                }
            }
            Op::GaussianSample(mean, std, noise) => {
                if self.ng(*mean) {
                    let d = slot(adj, *mean, g.len());
                    d.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                if self.ng(*std) {
                    let e = self.value(*noise).data();
                    let d = slot(adj, *std, g.len());
                    for i in 0..g.len() {
                        d[i] += g[i] * e[i];
                    }
                }
            }
            Op::KlDiag([mq, sq, mp, sp]) => {
                let (vmq, vsq, vmp, vsp) = (
                    self.value(*mq).data(),
                    self.value(*sq).data(),
                    self.value(*mp).data(),
                    self.value(*sp).data(),
                );
                let n = vmq.len();
                let up = g[0];
                let partial = |which: usize, i: usize| -> f64 {
                    let d = vmq[i] - vmp[i];
                    let p2 = vsp[i] * vsp[i];
                    match which {
                        0 => d / p2,
                        1 => -1.0 / vsq[i] + vsq[i] / p2,
                        2 => -d / p2,
                        _ => 1.0 / vsp[i] - (vsq[i] * vsq[i] + d * d) / (p2 * vsp[i]),
                    }
                };
                for (which, v) in [mq, sq, mp, sp].into_iter().enumerate() {
                    if self.ng(*v) {
                        let grads: Vec<f64> = (0..n).map(|i| up * partial(which, i)).collect();
                        let d = slot(adj, *v, n);
                        d.iter_mut().zip(&grads).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::GatherSum {
                table,
                indices,
                per_row,
            } => {
                if self.ng(*table) {
                    let tt = self.value(*table);
                    let width = tt.cols();
                    let d = slot(adj, *table, tt.len());
                    for (r, idx) in indices.chunks(*per_row).enumerate() {
                        let src = &g[r * width..(r + 1) * width];
                        for &i in idx {
                            let dst = &mut d[i as usize * width..(i as usize + 1) * width];
                            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
                        }
                    }
                }
            }
            Op::CategoricalNll {
                logits,
                targets,
                classes,
                probs,
            } => {
                if let Some(probs) = probs {
                    let scale = g[0] / targets.len() as f64;
                    let d = slot(adj, *logits, probs.len());
                    for ((pg, dg), &t) in probs
                        .chunks(*classes)
                        .zip(d.chunks_mut(*classes))
                        .zip(targets.iter())
                    {
                        for (c, (&p, dc)) in pg.iter().zip(dg.iter_mut()).enumerate() {
                            let y = if c == t as usize { 1.0 } else { 0.0 };
                            *dc += scale * (p - y);
                        }
                    }
                }
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn guard(x: f64) -> f64 {
    if x.abs() >= GUARD_EPS {
        x
    } else if x < 0.0 {
        -GUARD_EPS
    } else {
        GUARD_EPS
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

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn unary_forward(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Sigmoid => sigmoid(x),
        // exp overflows past ~709; cap the input so outputs stay finite.
        UnaryOp::Exp => x.min(700.0).exp(),
        UnaryOp::Log => x.max(GUARD_EPS).ln(),
        UnaryOp::Softplus => softplus(x),
        UnaryOp::Square => x * x,
        UnaryOp::Negate => -x,
        UnaryOp::Clamp(lo, hi) => x.clamp(lo, hi),
        UnaryOp::Scale(c) => c * x,
        UnaryOp::AddConst(c) => x + c,
    }
}

fn unary_derivative(op: UnaryOp, x: f64, y: f64) -> f64 {
    match op {
        UnaryOp::Tanh => 1.0 - y * y,
        UnaryOp::Sigmoid => y * (1.0 - y),
        UnaryOp::Exp => {
            if x > 700.0 {
                0.0
            } else {
                y
            }
        }
        UnaryOp::Log => {
            if x < GUARD_EPS {
                0.0
            } else {
                1.0 / x
            }
        }
        UnaryOp::Softplus => sigmoid(x),
        UnaryOp::Square => 2.0 * x,
        UnaryOp::Negate => -1.0,
        UnaryOp::Clamp(lo, hi) => {
            if x > lo && x < hi {
                1.0
            } else {
                0.0
            }
        }
        UnaryOp::Scale(c) => c,
        UnaryOp::AddConst(_) => 1.0,
    }
}

/// `c = a·b + beta·c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n) and `c` (m×n).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

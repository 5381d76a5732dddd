//! Reverse-mode differentiation on a record-on-execute tape.
//!
//! Every op evaluates eagerly and appends a node; node ids are assigned in
//! execution order, so the tape is topologically sorted by construction.
//! [`Tape::backward`] walks it once in reverse and accumulates gradients in
//! tape order, which makes results bit-reproducible.

pub mod gradcheck;

use std::sync::Arc;

use crate::error::{dim_err, Error, Result};
use crate::structured::kernels;
use crate::tensor::{self, Activation, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowVector(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Activation(Var, Activation),
    Sum(Var),
    Mean(Var),
    PermuteRows(Var, Arc<[usize]>),
    BlockDiag {
        blocks: Var,
        x: Var,
        transposed: bool,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ResizeRows(Var),
    ResizeCols(Var),
    ConcatCols(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or `None` if it did not influence the loss.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::elementwise_mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn add_row_vector(&mut self, a: Var, v: Var) -> Result<Var> {
        let out = tensor::add_row_vector(self.value(a), self.value(v))?;
        Ok(self.push(out, Op::AddRowVector(a, v), &[a, v]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = tensor::softmax_rows(self.value(a))?;
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let parts = tensor::layer_norm_parts(self.value(x), self.value(gain), self.value(bias))?;
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            normalized: parts.normalized,
            inv_std: parts.inv_std,
        };
        Ok(self.push(parts.out, op, &[x, gain, bias]))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let out = tensor::activation(self.value(a), kind);
        self.push(out, Op::Activation(a, kind), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(out, Op::Mean(a), &[a])
    }

    /// Mean squared error `(1/n)·Σ(pred − target)²`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.sub(pred, target)?;
        let sq = self.mul(diff, diff)?;
        Ok(self.mean(sq))
    }

    /// `y[i, :] = x[perm[i], :]`.
    pub fn permute_rows(&mut self, x: Var, perm: Arc<[usize]>) -> Result<Var> {
        let out = kernels::permute_rows(self.value(x), &perm)?;
        Ok(self.push(out, Op::PermuteRows(x, perm), &[x]))
    }

    /// Block-diagonal product `B·X` (or `Bᵀ·X`), blocks shaped `[nb, b, b]`.
    pub fn block_diag(&mut self, blocks: Var, x: Var, transposed: bool) -> Result<Var> {
        let out = kernels::block_diag_apply(self.value(blocks), self.value(x), transposed)?;
        let op = Op::BlockDiag {
            blocks,
            x,
            transposed,
        };
        Ok(self.push(out, op, &[blocks, x]))
    }

    /// Columns `start..start + width` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if start + width > n || width == 0 {
            return dim_err(format!(
                "slice_cols {start}..{} out of range for width {n}",
                start + width
            ));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&src.row(i)[start..start + width]);
        }
        let out = Tensor::new(vec![m, width], out)?;
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    /// Zero-pads or truncates the row count to `rows`.
    pub fn resize_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let out = resize_rows(self.value(x), rows)?;
        Ok(self.push(out, Op::ResizeRows(x), &[x]))
    }

    /// Zero-pads or truncates the column count to `cols`.
    pub fn resize_cols(&mut self, x: Var, cols: usize) -> Result<Var> {
        let out = resize_cols(self.value(x), cols)?;
        Ok(self.push(out, Op::ResizeCols(x), &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat_cols of nothing".into()))?;
        let m = self.value(*first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if pm != m {
                return dim_err(format!("concat_cols: row counts {m} and {pm} differ"));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(vec![m, total], out)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Reverse sweep from a scalar `loss`. Only nodes that require gradients
    /// receive one; leaf gradients are returned.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::ones(self.value(loss).shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let bt = self.value(*b).transpose()?;
                    self.accumulate(grads, *a, tensor::matmul(g, &bt)?);
                }
                if self.wants(*b) {
                    let at = self.value(*a).transpose()?;
                    self.accumulate(grads, *b, tensor::matmul(&at, g)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, tensor::elementwise_mul(g, self.value(*b))?);
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, tensor::elementwise_mul(g, self.value(*a))?);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::AddRowVector(a, v) => {
                self.accumulate(grads, *a, g.clone());
                if self.wants(*v) {
                    let (m, n) = g.dims2()?;
                    let mut cols = vec![0.0; n];
                    for i in 0..m {
                        for (c, x) in cols.iter_mut().zip(g.row(i)) {
                            *c += x;
                        }
                    }
                    let shape = self.value(*v).shape().to_vec();
                    self.accumulate(grads, *v, Tensor::new(shape, cols)?);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()?),
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.reshape(&shape)?);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let (m, n) = y.dims2()?;
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..n {
                        out[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![m, n], out)?);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (m, n) = g.dims2()?;
                let gv = self.value(*gain).data();
                if self.wants(*x) {
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let gr = g.row(i);
                        let xh = normalized.row(i);
                        let dxh: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_dxh = dxh.iter().sum::<f64>() / n as f64;
                        let mean_dxh_xh =
                            dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            dx[i * n + j] = inv_std[i] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![m, n], dx)?);
                }
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for i in 0..m {
                    let (gr, xh) = (g.row(i), normalized.row(i));
                    for j in 0..n {
                        dgain[j] += gr[j] * xh[j];
                        dbias[j] += gr[j];
                    }
                }
                let gshape = self.value(*gain).shape().to_vec();
                let bshape = self.value(*bias).shape().to_vec();
                self.accumulate(grads, *gain, Tensor::new(gshape, dgain)?);
                self.accumulate(grads, *bias, Tensor::new(bshape, dbias)?);
            }
            Op::Activation(a, kind) => {
                let x = self.value(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| gv * kind.derivative(xv))
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Sum(a) => {
                let gv = g.item()?;
                self.accumulate(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let gv = g.item()? / t.len() as f64;
                self.accumulate(grads, *a, Tensor::filled(t.shape(), gv));
            }
            Op::PermuteRows(x, perm) => {
                self.accumulate(grads, *x, kernels::scatter_rows(g, perm)?);
            }
            Op::BlockDiag {
                blocks,
                x,
                transposed,
            } => {
                let (db, dx) = kernels::block_diag_backward(
                    self.value(*blocks),
                    self.value(*x),
                    g,
                    *transposed,
                )?;
                self.accumulate(grads, *blocks, db);
                self.accumulate(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.value(*x).dims2()?;
                let w = g.cols();
                let mut dx = Tensor::zeros(&[m, n]);
                for i in 0..m {
                    for j in 0..w {
                        dx.set(i, start + j, g.at(i, j));
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ResizeRows(x) => {
                let rows = self.value(*x).rows();
                self.accumulate(grads, *x, resize_rows(g, rows)?);
            }
            Op::ResizeCols(x) => {
                let cols = self.value(*x).cols();
                self.accumulate(grads, *x, resize_cols(g, cols)?);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let (m, w) = self.value(p).dims2()?;
                    let mut dp = Vec::with_capacity(m * w);
                    for i in 0..m {
                        dp.extend_from_slice(&g.row(i)[start..start + w]);
                    }
                    start += w;
                    self.accumulate(grads, p, Tensor::new(vec![m, w], dp)?);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn resize_rows(x: &Tensor, rows: usize) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    if rows == 0 {
        return dim_err("resize_rows to zero rows");
    }
    let mut out = vec![0.0; rows * n];
    let keep = m.min(rows);
    out[..keep * n].copy_from_slice(&x.data()[..keep * n]);
    Tensor::new(vec![rows, n], out)
}

pub(crate) fn resize_cols(x: &Tensor, cols: usize) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    if cols == 0 {
        return dim_err("resize_cols to zero columns");
    }
    let keep = n.min(cols);
    let mut out = vec![0.0; m * cols];
    for i in 0..m {
        out[i * cols..i * cols + keep].copy_from_slice(&x.row(i)[..keep]);
    }
    Tensor::new(vec![m, cols], out)
}

/// A set of learnable tensors that can be bound onto a tape.
///
/// `tensors`, `tensors_mut` and `attach` must all walk the parameters in the
/// same order; gradient checking and the optimizer rely on it.
pub trait Parameterized {
    type Bound;

    fn tensors(&self) -> Vec<&Tensor>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    /// Rebuilds the bound view from leaf handles produced in `tensors()` order.
    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> Self::Bound;

    fn bind(&self, tape: &mut Tape, trainable: bool) -> (Self::Bound, Vec<Var>) {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        let bound = self.attach(&mut vars.iter().copied());
        (bound, vars)
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

//! Order-2 Monarch matrices `M = P·L·P·R·P`.
//!
//! `L` and `R` are block-diagonal with `b = √n` dense `b×b` blocks and `P`
//! is the fixed grid-transpose permutation `h(i) = ⌊i/b⌋ + b·(i mod b)`.
//! A Monarch of size `n` therefore carries exactly `2·n^{3/2}` parameters.

pub(crate) mod kernels;
pub mod meter;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{self, Parameterized, Tape, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{self, Tensor};

/// Integer square root when `n` is a perfect square.
pub fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// `2·n^{3/2}` for perfect-square `n`.
pub fn monarch_param_count(n: usize) -> Result<usize> {
    match exact_sqrt(n) {
        Some(b) => Ok(2 * b * b * b),
        None => not_square(n),
    }
}

/// FLOPs charged by one Monarch application to `d` columns: two
/// block-diagonal products of `n^{3/2}·d` multiply-adds each.
pub fn monarch_apply_flops(n: usize, d: usize) -> Result<u64> {
    Ok(2 * monarch_param_count(n)? as u64 * d as u64)
}

fn not_square<T>(n: usize) -> Result<T> {
    dim_err(format!(
        "size {n} is not a perfect square; lift it with pad_to_square first"
    ))
}

/// The fixed permutation shared by every Monarch of size `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationSpec {
    n: usize,
    block: usize,
    map: Arc<[usize]>,
}

impl PermutationSpec {
    pub fn new(n: usize) -> Result<Self> {
        let Some(b) = exact_sqrt(n) else {
            return not_square(n);
        };
        let map: Vec<usize> = (0..n).map(|i| i / b + b * (i % b)).collect();
        Ok(Self {
            n,
            block: b,
            map: map.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub(crate) fn shared(&self) -> Arc<[usize]> {
        Arc::clone(&self.map)
    }

    /// Dense permutation matrix with `P[i, h(i)] = 1`, so `(P·x)_i = x_{h(i)}`.
    pub fn to_dense(&self) -> Tensor {
        let mut p = Tensor::zeros(&[self.n, self.n]);
        for (i, &j) in self.map.iter().enumerate() {
            p.set(i, j, 1.0);
        }
        p
    }
}

/// Block-diagonal factor: `b` dense `b×b` blocks stored as `[b, b, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagonal {
    block: usize,
    blocks: Tensor,
}

impl BlockDiagonal {
    pub fn from_blocks(blocks: &[Tensor]) -> Result<Self> {
        let b = blocks.len();
        if b == 0 {
            return dim_err("block-diagonal factor needs at least one block");
        }
        let mut data = Vec::with_capacity(b * b * b);
        for (j, blk) in blocks.iter().enumerate() {
            if blk.shape() != [b, b] {
                return dim_err(format!(
                    "block {j} has shape {:?}, expected [{b}, {b}]",
                    blk.shape()
                ));
            }
            data.extend_from_slice(blk.data());
        }
        Ok(Self {
            block: b,
            blocks: Tensor::new(vec![b, b, b], data)?,
        })
    }

    pub fn from_tensor(blocks: Tensor) -> Result<Self> {
        match blocks.shape()[..] {
            [a, b, c] if a == b && b == c => Ok(Self { block: a, blocks }),
            _ => dim_err(format!(
                "block-diagonal tensor must be [b, b, b], got {:?}",
                blocks.shape()
            )),
        }
    }

    pub fn zeros(b: usize) -> Self {
        Self {
            block: b,
            blocks: Tensor::zeros(&[b, b, b]),
        }
    }

    pub fn identity(b: usize) -> Self {
        let mut out = Self::zeros(b);
        for j in 0..b {
            for r in 0..b {
                out.set(j, r, r, 1.0);
            }
        }
        out
    }

    /// Entries from `normal(0, σ²)` with `σ² = 1/b`, the fan-in of one block.
    pub fn kaiming<R: Rng + ?Sized>(b: usize, rng: &mut R) -> Self {
        Self {
            block: b,
            blocks: Tensor::randn(&[b, b, b], (1.0 / b as f64).sqrt(), rng),
        }
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn num_blocks(&self) -> usize {
        self.block
    }

    pub fn blocks(&self) -> &Tensor {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut Tensor {
        &mut self.blocks
    }

    pub fn get(&self, block: usize, r: usize, c: usize) -> f64 {
        let b = self.block;
        self.blocks.data()[block * b * b + r * b + c]
    }

    pub fn set(&mut self, block: usize, r: usize, c: usize, v: f64) {
        let b = self.block;
        self.blocks.data_mut()[block * b * b + r * b + c] = v;
    }

    /// Sets the dense-matrix entry `(row, col)`; both must lie in one block.
    pub fn set_dense(&mut self, row: usize, col: usize, v: f64) -> Result<()> {
        let b = self.block;
        if row / b != col / b {
            return dim_err(format!(
                "entry ({row}, {col}) lies outside the diagonal blocks of size {b}"
            ));
        }
        self.set(row / b, row % b, col % b, v);
        Ok(())
    }

    pub fn to_dense(&self) -> Tensor {
        let b = self.block;
        let n = b * b;
        let mut out = Tensor::zeros(&[n, n]);
        for j in 0..b {
            for r in 0..b {
                for c in 0..b {
                    out.set(j * b + r, j * b + c, self.get(j, r, c));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum MonarchInit {
    KaimingBlock,
    IdentityBlock,
    Zero,
    /// `b` left blocks and `b` right blocks, each `b×b`.
    Explicit { left: Vec<Tensor>, right: Vec<Tensor> },
}

/// Which side of the operand the Monarch multiplies from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `M·X` with `X: n×d`.
    Left,
    /// `X·M` with `X: d×n`.
    Right,
}

#[derive(Clone, Debug)]
pub struct MonarchMatrix {
    perm: PermutationSpec,
    left: BlockDiagonal,
    right: BlockDiagonal,
}

impl MonarchMatrix {
    pub fn new<R: Rng + ?Sized>(n: usize, init: MonarchInit, rng: &mut R) -> Result<Self> {
        let perm = PermutationSpec::new(n)?;
        let b = perm.block();
        let (left, right) = match init {
            MonarchInit::KaimingBlock => {
                let l = BlockDiagonal::kaiming(b, rng);
                (l, BlockDiagonal::kaiming(b, rng))
            }
            MonarchInit::IdentityBlock => (BlockDiagonal::identity(b), BlockDiagonal::identity(b)),
            MonarchInit::Zero => (BlockDiagonal::zeros(b), BlockDiagonal::zeros(b)),
            MonarchInit::Explicit { left, right } => {
                if left.len() != b || right.len() != b {
                    return dim_err(format!(
                        "explicit Monarch init of size {n} needs {b} left and {b} right blocks, got {} and {}",
                        left.len(),
                        right.len()
                    ));
                }
                (BlockDiagonal::from_blocks(&left)?, BlockDiagonal::from_blocks(&right)?)
            }
        };
        Ok(Self { perm, left, right })
    }

    pub fn from_factors(left: BlockDiagonal, right: BlockDiagonal) -> Result<Self> {
        if left.block_size() != right.block_size() {
            return dim_err(format!(
                "factor block sizes {} and {} differ",
                left.block_size(),
                right.block_size()
            ));
        }
        let b = left.block_size();
        Ok(Self {
            perm: PermutationSpec::new(b * b)?,
            left,
            right,
        })
    }

    /// Seeded convenience for Kaiming-block initialization.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        Self::new(n, MonarchInit::KaimingBlock, rng)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, MonarchInit::Zero, &mut rand::rng())
    }

    pub fn identity_blocks(n: usize) -> Result<Self> {
        Self::new(n, MonarchInit::IdentityBlock, &mut rand::rng())
    }

    pub fn n(&self) -> usize {
        self.perm.n()
    }

    pub fn permutation(&self) -> &PermutationSpec {
        &self.perm
    }

    pub fn left(&self) -> &BlockDiagonal {
        &self.left
    }

    pub fn right(&self) -> &BlockDiagonal {
        &self.right
    }

    pub fn left_mut(&mut self) -> &mut BlockDiagonal {
        &mut self.left
    }

    pub fn right_mut(&mut self) -> &mut BlockDiagonal {
        &mut self.right
    }

    /// Explicit `P·L·P·R·P` built from dense factors. Oracle use only.
    pub fn to_dense(&self) -> Tensor {
        let p = self.perm.to_dense();
        let l = self.left.to_dense();
        let r = self.right.to_dense();
        let chain = [&p, &l, &p, &r, &p];
        let mut acc = chain[0].clone();
        for m in &chain[1..] {
            acc = tensor::matmul(&acc, m).expect("square factors of equal size");
        }
        acc
    }

    /// Factored application without recording on a tape.
    pub fn apply(&self, x: &Tensor, side: Side) -> Result<Tensor> {
        let h = self.perm.map();
        let (l, r) = (self.left.blocks(), self.right.blocks());
        match side {
            Side::Left => {
                self.check_rows(x)?;
                let y = kernels::permute_rows(x, h)?;
                let y = kernels::block_diag_apply(r, &y, false)?;
                let y = kernels::permute_rows(&y, h)?;
                let y = kernels::block_diag_apply(l, &y, false)?;
                kernels::permute_rows(&y, h)
            }
            Side::Right => {
                let xt = x.transpose()?;
                self.check_rows(&xt)?;
                let y = kernels::permute_rows(&xt, h)?;
                let y = kernels::block_diag_apply(l, &y, true)?;
                let y = kernels::permute_rows(&y, h)?;
                let y = kernels::block_diag_apply(r, &y, true)?;
                kernels::permute_rows(&y, h)?.transpose()
            }
        }
    }

    fn check_rows(&self, x: &Tensor) -> Result<()> {
        let (rows, _) = x.dims2()?;
        if rows != self.n() {
            return dim_err(format!(
                "Monarch of size {} cannot multiply operand of shape {:?}",
                self.n(),
                x.shape()
            ));
        }
        Ok(())
    }
}

/// A Monarch whose factors live on a tape.
#[derive(Clone, Debug)]
pub struct MonarchVars {
    pub left: Var,
    pub right: Var,
    perm: Arc<[usize]>,
}

impl MonarchVars {
    pub fn n(&self) -> usize {
        self.perm.len()
    }
}

impl Parameterized for MonarchMatrix {
    type Bound = MonarchVars;

    fn tensors(&self) -> Vec<&Tensor> {
        vec![self.left.blocks(), self.right.blocks()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.left.blocks, &mut self.right.blocks]
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> MonarchVars {
        MonarchVars {
            left: vars.next().expect("left factor"),
            right: vars.next().expect("right factor"),
            perm: self.perm.shared(),
        }
    }
}

/// Differentiable factored application on a tape; never materializes `M`.
pub fn monarch_apply(tape: &mut Tape, m: &MonarchVars, x: Var, side: Side) -> Result<Var> {
    let rows = match side {
        Side::Left => tape.value(x).dims2()?.0,
        Side::Right => tape.value(x).dims2()?.1,
    };
    if rows != m.n() {
        return dim_err(format!(
            "Monarch of size {} cannot multiply operand of shape {:?} from the {side:?}",
            m.n(),
            tape.value(x).shape()
        ));
    }
    let h = &m.perm;
    match side {
        Side::Left => {
            let y = tape.permute_rows(x, h.clone())?;
            let y = tape.block_diag(m.right, y, false)?;
            let y = tape.permute_rows(y, h.clone())?;
            let y = tape.block_diag(m.left, y, false)?;
            tape.permute_rows(y, h.clone())
        }
        Side::Right => {
            let y = tape.transpose(x)?;
            let y = tape.permute_rows(y, h.clone())?;
            let y = tape.block_diag(m.left, y, true)?;
            let y = tape.permute_rows(y, h.clone())?;
            let y = tape.block_diag(m.right, y, true)?;
            let y = tape.permute_rows(y, h.clone())?;
            tape.transpose(y)
        }
    }
}

/// Zero-padding from `n` up to the next perfect square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub n: usize,
    pub n_pad: usize,
}

pub fn pad_to_square(n: usize) -> Padding {
    let mut r = (n as f64).sqrt().floor() as usize;
    while r * r < n {
        r += 1;
    }
    Padding { n, n_pad: r * r }
}

impl Padding {
    pub fn is_identity(&self) -> bool {
        self.n == self.n_pad
    }

    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        out.resize(self.n_pad, 0.0);
        out
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        v[..self.n.min(v.len())].to_vec()
    }

    pub fn lift_rows(&self, x: &Tensor) -> Result<Tensor> {
        autograd::resize_rows(x, self.n_pad)
    }

    pub fn project_rows(&self, x: &Tensor) -> Result<Tensor> {
        autograd::resize_rows(x, self.n)
    }

    pub fn lift_cols(&self, x: &Tensor) -> Result<Tensor> {
        autograd::resize_cols(x, self.n_pad)
    }

    pub fn project_cols(&self, x: &Tensor) -> Result<Tensor> {
        autograd::resize_cols(x, self.n)
    }
}

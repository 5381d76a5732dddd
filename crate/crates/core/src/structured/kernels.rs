//! Raw kernels behind Monarch application: block-diagonal products and row
//! permutations. The FLOP meter is charged here, once per forward product.

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

use super::meter;

fn block_layout(blocks: &Tensor) -> Result<(usize, usize)> {
    match blocks.shape()[..] {
        [nb, b, b2] if b == b2 => Ok((nb, b)),
        _ => dim_err(format!(
            "block-diagonal factor must have shape [blocks, b, b], got {:?}",
            blocks.shape()
        )),
    }
}

/// `Y = B·X` (or `Bᵀ·X` when `transposed`) for a block-diagonal `B` stored
/// as `[num_blocks, b, b]` and `X` of shape `(num_blocks·b)×d`.
pub(crate) fn block_diag_apply(blocks: &Tensor, x: &Tensor, transposed: bool) -> Result<Tensor> {
    let (nb, b) = block_layout(blocks)?;
    let (n, d) = x.dims2()?;
    if n != nb * b {
        return dim_err(format!(
            "block-diagonal product: factor covers {} rows but input has shape {:?}",
            nb * b,
            x.shape()
        ));
    }
    let bd = blocks.data();
    let xd = x.data();
    let mut out = vec![0.0; n * d];
    for j in 0..nb {
        let blk = &bd[j * b * b..(j + 1) * b * b];
        for r in 0..b {
            let dst = &mut out[(j * b + r) * d..(j * b + r + 1) * d];
            for s in 0..b {
                let coef = if transposed { blk[s * b + r] } else { blk[r * b + s] };
                let src = &xd[(j * b + s) * d..(j * b + s + 1) * d];
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += coef * v;
                }
            }
        }
    }
    // b blocks of b×b times b×d, one multiply-add = 2 FLOPs
    meter::charge(2 * (nb * b * b * d) as u64);
    Tensor::new(vec![n, d], out)
}

/// Gradients of [`block_diag_apply`] with respect to the blocks and the input.
pub(crate) fn block_diag_backward(
    blocks: &Tensor,
    x: &Tensor,
    grad: &Tensor,
    transposed: bool,
) -> Result<(Tensor, Tensor)> {
    let (nb, b) = block_layout(blocks)?;
    let (n, d) = x.dims2()?;
    let bd = blocks.data();
    let xd = x.data();
    let gd = grad.data();
    let mut dblocks = vec![0.0; nb * b * b];
    let mut dx = vec![0.0; n * d];
    for j in 0..nb {
        let blk = &bd[j * b * b..(j + 1) * b * b];
        let dblk = &mut dblocks[j * b * b..(j + 1) * b * b];
        for r in 0..b {
            let g_row = &gd[(j * b + r) * d..(j * b + r + 1) * d];
            for s in 0..b {
                let x_row = &xd[(j * b + s) * d..(j * b + s + 1) * d];
                let dot: f64 = g_row.iter().zip(x_row).map(|(g, v)| g * v).sum();
                let (coef, slot) = if transposed {
                    (blk[s * b + r], s * b + r)
                } else {
                    (blk[r * b + s], r * b + s)
                };
                dblk[slot] += dot;
                let dx_row = &mut dx[(j * b + s) * d..(j * b + s + 1) * d];
                for (o, g) in dx_row.iter_mut().zip(g_row) {
                    *o += coef * g;
                }
            }
        }
    }
    Ok((
        Tensor::new(blocks.shape().to_vec(), dblocks)?,
        Tensor::new(vec![n, d], dx)?,
    ))
}

/// `y[i, :] = x[perm[i], :]`.
pub(crate) fn permute_rows(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if perm.len() != n {
        return dim_err(format!(
            "permutation of size {} applied to shape {:?}",
            perm.len(),
            x.shape()
        ));
    }
    let xd = x.data();
    let mut out = Vec::with_capacity(n * d);
    for &src in perm {
        out.extend_from_slice(&xd[src * d..(src + 1) * d]);
    }
    Tensor::new(vec![n, d], out)
}

/// Adjoint of [`permute_rows`]: `dx[perm[i], :] += g[i, :]`.
pub(crate) fn scatter_rows(grad: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let (n, d) = grad.dims2()?;
    let gd = grad.data();
    let mut out = vec![0.0; n * d];
    for (i, &dst) in perm.iter().enumerate() {
        for c in 0..d {
            out[dst * d + c] += gd[i * d + c];
        }
    }
    Tensor::new(vec![n, d], out)
}

//! Surrogate Attention Block, Surrogate FFN Block and the enhanced encoder
//! layer that combines them.
//!
//! Per head `h`, with `Q, K, V` produced by per-head Monarch projections of
//! contiguous column chunks of `X`:
//!
//! ```text
//! SA(h)  = (M2 · ((M1 · Q(h)) ⊙ K(h))) ⊙ V(h)
//! output = Σ_h SA(h) · W_out(h)
//! ```
//!
//! `M1`, `M2` act along the (zero-padded) sequence axis. There is no softmax
//! and no `1/√d` scaling. The FFN replacement is `σ(X·M1)·M2` over the
//! (padded) feature axis.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Parameterized, Tape, Var};
use crate::error::{config_err, dim_err, Result};
use crate::structured::{monarch_apply, pad_to_square, MonarchInit, MonarchMatrix, MonarchVars, Padding, Side};
use crate::tensor::{Activation, Tensor};

/// Extents of one surrogate attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionShape {
    pub seq_len: usize,
    pub d_in: usize,
    pub heads: usize,
    pub d_out: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockInit {
    /// Kaiming-block Monarchs, `normal(0, 1/fan_in)` dense output weights.
    Random,
    /// Identity blocks everywhere, identity-like output projection.
    Identity,
    Zero,
}

fn monarch_init(init: BlockInit) -> MonarchInit {
    match init {
        BlockInit::Random => MonarchInit::KaimingBlock,
        BlockInit::Identity => MonarchInit::IdentityBlock,
        BlockInit::Zero => MonarchInit::Zero,
    }
}

fn dense_init<R: Rng + ?Sized>(rows: usize, cols: usize, init: BlockInit, rng: &mut R) -> Tensor {
    match init {
        BlockInit::Random => Tensor::randn(&[rows, cols], (1.0 / rows as f64).sqrt(), rng),
        BlockInit::Identity => {
            let mut t = Tensor::zeros(&[rows, cols]);
            for i in 0..rows.min(cols) {
                t.set(i, i, 1.0);
            }
            t
        }
        BlockInit::Zero => Tensor::zeros(&[rows, cols]),
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateAttentionParams {
    pub heads: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Sequence length `N` and its padded size.
    pub seq: Padding,
    /// Head chunk width `D_in / H` and its padded size `D_head`.
    pub head_width: Padding,
    pub q: Vec<MonarchMatrix>,
    pub k: Vec<MonarchMatrix>,
    pub v: Vec<MonarchMatrix>,
    pub m1: MonarchMatrix,
    pub m2: MonarchMatrix,
    /// Per-head `D_head × D_out` output projections.
    pub w_out: Vec<Tensor>,
}

impl SurrogateAttentionParams {
    pub fn new<R: Rng + ?Sized>(shape: AttentionShape, init: BlockInit, rng: &mut R) -> Result<Self> {
        let AttentionShape {
            seq_len,
            d_in,
            heads,
            d_out,
        } = shape;
        if heads == 0 || seq_len == 0 || d_in == 0 || d_out == 0 {
            return config_err(format!("attention extents must be positive: {shape:?}"));
        }
        if d_in % heads != 0 {
            return config_err(format!("D_in = {d_in} is not divisible by H = {heads}"));
        }
        let seq = pad_to_square(seq_len);
        let head_width = pad_to_square(d_in / heads);
        let d_head = head_width.n_pad;
        let projections = |rng: &mut R| -> Result<Vec<MonarchMatrix>> {
            (0..heads)
                .map(|_| MonarchMatrix::new(d_head, monarch_init(init), rng))
                .collect()
        };
        let q = projections(rng)?;
        let k = projections(rng)?;
        let v = projections(rng)?;
        let m1 = MonarchMatrix::new(seq.n_pad, monarch_init(init), rng)?;
        let m2 = MonarchMatrix::new(seq.n_pad, monarch_init(init), rng)?;
        let w_out = (0..heads).map(|_| dense_init(d_head, d_out, init, rng)).collect();
        Ok(Self {
            heads,
            d_in,
            d_out,
            seq,
            head_width,
            q,
            k,
            v,
            m1,
            m2,
            w_out,
        })
    }

    pub fn d_head(&self) -> usize {
        self.head_width.n_pad
    }

    /// `3·H·2·D_head^{3/2} + 2·2·N_pad^{3/2} + H·D_head·D_out`.
    pub fn analytic_param_count(&self) -> usize {
        let dh = self.d_head();
        let b_head = (dh as f64).sqrt() as usize;
        let b_seq = (self.seq.n_pad as f64).sqrt() as usize;
        3 * self.heads * 2 * b_head.pow(3) + 2 * 2 * b_seq.pow(3) + self.heads * dh * self.d_out
    }
}

#[derive(Clone, Debug)]
pub struct AttentionVars {
    pub q: Vec<MonarchVars>,
    pub k: Vec<MonarchVars>,
    pub v: Vec<MonarchVars>,
    pub m1: MonarchVars,
    pub m2: MonarchVars,
    pub w_out: Vec<Var>,
}

impl Parameterized for SurrogateAttentionParams {
    type Bound = AttentionVars;

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for group in [&self.q, &self.k, &self.v] {
            for m in group {
                out.extend(m.tensors());
            }
        }
        out.extend(self.m1.tensors());
        out.extend(self.m2.tensors());
        out.extend(self.w_out.iter());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for group in [&mut self.q, &mut self.k, &mut self.v] {
            for m in group.iter_mut() {
                out.extend(m.tensors_mut());
            }
        }
        out.extend(self.m1.tensors_mut());
        out.extend(self.m2.tensors_mut());
        out.extend(self.w_out.iter_mut());
        out
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> AttentionVars {
        let group = |ms: &[MonarchMatrix], vars: &mut dyn Iterator<Item = Var>| {
            ms.iter().map(|m| m.attach(vars)).collect::<Vec<_>>()
        };
        let q = group(&self.q, vars);
        let k = group(&self.k, vars);
        let v = group(&self.v, vars);
        let m1 = self.m1.attach(vars);
        let m2 = self.m2.attach(vars);
        let w_out = self.w_out.iter().map(|_| vars.next().expect("w_out")).collect();
        AttentionVars {
            q,
            k,
            v,
            m1,
            m2,
            w_out,
        }
    }
}

/// Per-head query, key and value, each `rows × D_head`.
#[derive(Clone, Copy, Debug)]
pub struct HeadQkv {
    pub q: Var,
    pub k: Var,
    pub v: Var,
}

fn check_input(tape: &Tape, p: &SurrogateAttentionParams, x: Var) -> Result<(usize, usize)> {
    let (rows, cols) = tape.value(x).dims2()?;
    if cols != p.d_in {
        return dim_err(format!(
            "surrogate attention expects {} input features, got shape {:?}",
            p.d_in,
            tape.value(x).shape()
        ));
    }
    if rows > p.seq.n_pad {
        return dim_err(format!(
            "sequence of {rows} rows exceeds the padded length {}",
            p.seq.n_pad
        ));
    }
    Ok((rows, cols))
}

/// Splits `X` into `H` contiguous column chunks and right-multiplies chunk
/// `h` by `M_Q(h)`, `M_K(h)` and `M_V(h)`.
pub fn structured_projection_on(
    tape: &mut Tape,
    p: &SurrogateAttentionParams,
    b: &AttentionVars,
    x: Var,
) -> Result<Vec<HeadQkv>> {
    check_input(tape, p, x)?;
    let width = p.head_width.n;
    let d_head = p.d_head();
    (0..p.heads)
        .map(|h| {
            let chunk = tape.slice_cols(x, h * width, width)?;
            let chunk = tape.resize_cols(chunk, d_head)?;
            Ok(HeadQkv {
                q: monarch_apply(tape, &b.q[h], chunk, Side::Right)?,
                k: monarch_apply(tape, &b.k[h], chunk, Side::Right)?,
                v: monarch_apply(tape, &b.v[h], chunk, Side::Right)?,
            })
        })
        .collect()
}

/// `(M2 · ((M1 · Q) ⊙ K)) ⊙ V` with rows zero-padded to the Monarch size and
/// truncated back afterwards.
pub fn sequence_mixing_on(
    tape: &mut Tape,
    m1: &MonarchVars,
    m2: &MonarchVars,
    qkv: HeadQkv,
) -> Result<Var> {
    let rows = tape.value(qkv.q).dims2()?.0;
    let n_pad = m1.n();
    if m2.n() != n_pad {
        return dim_err(format!("sequence Monarchs differ in size: {} vs {}", n_pad, m2.n()));
    }
    if rows > n_pad {
        return dim_err(format!("sequence of {rows} rows exceeds Monarch size {n_pad}"));
    }
    let q = tape.resize_rows(qkv.q, n_pad)?;
    let k = tape.resize_rows(qkv.k, n_pad)?;
    let v = tape.resize_rows(qkv.v, n_pad)?;
    let mixed = monarch_apply(tape, m1, q, Side::Left)?;
    let scores = tape.mul(mixed, k)?;
    let spread = monarch_apply(tape, m2, scores, Side::Left)?;
    let out = tape.mul(spread, v)?;
    tape.resize_rows(out, rows)
}

/// Per-head outputs before the output projection.
pub fn head_outputs_on(
    tape: &mut Tape,
    p: &SurrogateAttentionParams,
    b: &AttentionVars,
    x: Var,
) -> Result<Vec<Var>> {
    let qkv = structured_projection_on(tape, p, b, x)?;
    qkv.into_iter()
        .map(|h| sequence_mixing_on(tape, &b.m1, &b.m2, h))
        .collect()
}

/// `Σ_h SA(h) · W_out(h)`.
pub fn surrogate_attention_on(
    tape: &mut Tape,
    p: &SurrogateAttentionParams,
    b: &AttentionVars,
    x: Var,
) -> Result<Var> {
    let heads = head_outputs_on(tape, p, b, x)?;
    let mut acc: Option<Var> = None;
    for (sa, &w) in heads.into_iter().zip(&b.w_out) {
        let y = tape.matmul(sa, w)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, y)?,
            None => y,
        });
    }
    Ok(acc.expect("at least one head"))
}

pub fn structured_projection(x: &Tensor, p: &SurrogateAttentionParams) -> Result<Vec<(Tensor, Tensor, Tensor)>> {
    let mut tape = Tape::new();
    let (b, _) = p.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let heads = structured_projection_on(&mut tape, p, &b, xv)?;
    Ok(heads
        .into_iter()
        .map(|h| {
            (
                tape.value(h.q).clone(),
                tape.value(h.k).clone(),
                tape.value(h.v).clone(),
            )
        })
        .collect())
}

pub fn surrogate_attention_forward(x: &Tensor, p: &SurrogateAttentionParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (b, _) = p.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y = surrogate_attention_on(&mut tape, p, &b, xv)?;
    Ok(tape.value(y).clone())
}

/// Sequence mixing with externally supplied `Q, K, V` (projections skipped).
pub fn sequence_mixing(
    m1: &MonarchMatrix,
    m2: &MonarchMatrix,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let b1 = m1.bind(&mut tape, false).0;
    let b2 = m2.bind(&mut tape, false).0;
    let qkv = HeadQkv {
        q: tape.constant(q.clone()),
        k: tape.constant(k.clone()),
        v: tape.constant(v.clone()),
    };
    let y = sequence_mixing_on(&mut tape, &b1, &b2, qkv)?;
    Ok(tape.value(y).clone())
}

#[derive(Clone, Debug)]
pub struct SurrogateFfnParams {
    pub width: Padding,
    pub m1: MonarchMatrix,
    pub m2: MonarchMatrix,
    pub activation: Activation,
}

impl SurrogateFfnParams {
    pub fn new<R: Rng + ?Sized>(d_in: usize, activation: Activation, init: BlockInit, rng: &mut R) -> Result<Self> {
        if d_in == 0 {
            return config_err("FFN width must be positive");
        }
        let width = pad_to_square(d_in);
        Ok(Self {
            width,
            m1: MonarchMatrix::new(width.n_pad, monarch_init(init), rng)?,
            m2: MonarchMatrix::new(width.n_pad, monarch_init(init), rng)?,
            activation,
        })
    }

    /// `2·2·D_pad^{3/2}`.
    pub fn analytic_param_count(&self) -> usize {
        let b = (self.width.n_pad as f64).sqrt() as usize;
        4 * b.pow(3)
    }
}

#[derive(Clone, Debug)]
pub struct FfnVars {
    pub m1: MonarchVars,
    pub m2: MonarchVars,
}

impl Parameterized for SurrogateFfnParams {
    type Bound = FfnVars;

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.m1.tensors();
        out.extend(self.m2.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.m1.tensors_mut();
        out.extend(self.m2.tensors_mut());
        out
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> FfnVars {
        FfnVars {
            m1: self.m1.attach(vars),
            m2: self.m2.attach(vars),
        }
    }
}

/// `project(σ(lift(X)·M1)·M2)` over the feature axis.
pub fn surrogate_ffn_on(tape: &mut Tape, p: &SurrogateFfnParams, b: &FfnVars, x: Var) -> Result<Var> {
    let cols = tape.value(x).dims2()?.1;
    if cols != p.width.n {
        return dim_err(format!(
            "surrogate FFN expects {} features, got shape {:?}",
            p.width.n,
            tape.value(x).shape()
        ));
    }
    let lifted = tape.resize_cols(x, p.width.n_pad)?;
    let h = monarch_apply(tape, &b.m1, lifted, Side::Right)?;
    let h = tape.activation(h, p.activation);
    let y = monarch_apply(tape, &b.m2, h, Side::Right)?;
    tape.resize_cols(y, p.width.n)
}

pub fn surrogate_ffn_forward(x: &Tensor, p: &SurrogateFfnParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (b, _) = p.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y = surrogate_ffn_on(&mut tape, p, &b, xv)?;
    Ok(tape.value(y).clone())
}

/// Placement of layer normalization around each residual sub-layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormStyle {
    /// `X = LN(X + F(X))`
    PostLn,
    /// `X = X + F(LN(X))`
    PreLn,
}

impl std::str::FromStr for NormStyle {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post-ln" | "post" => Ok(NormStyle::PostLn),
            "pre-ln" | "pre" => Ok(NormStyle::PreLn),
            other => config_err(format!("unknown norm style `{other}`")),
        }
    }
}

/// Inverted dropout with its own seeded generator. Training only.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Self { rate, rng }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let shape = tape.value(x).shape().to_vec();
        let len: usize = shape.iter().product();
        let mask: Vec<f64> = (0..len)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, mask)
    }
}

/// Layer-norm gain and bias.
#[derive(Clone, Debug)]
pub struct NormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl NormParams {
    pub fn new(width: usize) -> Self {
        Self {
            gain: Tensor::ones(&[width]),
            bias: Tensor::zeros(&[width]),
        }
    }
}

/// One residual sub-layer in either norm style.
pub fn residual<F>(
    tape: &mut Tape,
    style: NormStyle,
    x: Var,
    gain: Var,
    bias: Var,
    dropout: Option<&mut Dropout>,
    sublayer: F,
) -> Result<Var>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    match style {
        NormStyle::PostLn => {
            let mut f = sublayer(tape, x)?;
            if let Some(d) = dropout {
                f = d.apply(tape, f)?;
            }
            let s = tape.add(x, f)?;
            tape.layer_norm(s, gain, bias)
        }
        NormStyle::PreLn => {
            let n = tape.layer_norm(x, gain, bias)?;
            let mut f = sublayer(tape, n)?;
            if let Some(d) = dropout {
                f = d.apply(tape, f)?;
            }
            tape.add(x, f)
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnhancedLayerParams {
    pub attn: SurrogateAttentionParams,
    pub ffn: SurrogateFfnParams,
    pub norm: NormStyle,
    pub ln1: NormParams,
    pub ln2: NormParams,
}

impl EnhancedLayerParams {
    /// A layer mapping `seq_len × d_model` to itself.
    pub fn new<R: Rng + ?Sized>(
        seq_len: usize,
        d_model: usize,
        heads: usize,
        norm: NormStyle,
        activation: Activation,
        init: BlockInit,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = AttentionShape {
            seq_len,
            d_in: d_model,
            heads,
            d_out: d_model,
        };
        Ok(Self {
            attn: SurrogateAttentionParams::new(shape, init, rng)?,
            ffn: SurrogateFfnParams::new(d_model, activation, init, rng)?,
            norm,
            ln1: NormParams::new(d_model),
            ln2: NormParams::new(d_model),
        })
    }
}

#[derive(Clone, Debug)]
pub struct EnhancedLayerVars {
    pub attn: AttentionVars,
    pub ffn: FfnVars,
    pub ln1: (Var, Var),
    pub ln2: (Var, Var),
}

impl Parameterized for EnhancedLayerParams {
    type Bound = EnhancedLayerVars;

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.attn.tensors();
        out.extend(self.ffn.tensors());
        out.extend([&self.ln1.gain, &self.ln1.bias, &self.ln2.gain, &self.ln2.bias]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.attn.tensors_mut();
        out.extend(self.ffn.tensors_mut());
        out.extend([
            &mut self.ln1.gain,
            &mut self.ln1.bias,
            &mut self.ln2.gain,
            &mut self.ln2.bias,
        ]);
        out
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> EnhancedLayerVars {
        let attn = self.attn.attach(vars);
        let ffn = self.ffn.attach(vars);
        let mut next = || vars.next().expect("layer norm parameter");
        let ln1 = (next(), next());
        let ln2 = (next(), next());
        EnhancedLayerVars { attn, ffn, ln1, ln2 }
    }
}

pub fn enhanced_layer_on(
    tape: &mut Tape,
    p: &EnhancedLayerParams,
    b: &EnhancedLayerVars,
    x: Var,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let x1 = residual(tape, p.norm, x, b.ln1.0, b.ln1.1, dropout.as_deref_mut(), |t, v| {
        surrogate_attention_on(t, &p.attn, &b.attn, v)
    })?;
    residual(tape, p.norm, x1, b.ln2.0, b.ln2.1, dropout, |t, v| {
        surrogate_ffn_on(t, &p.ffn, &b.ffn, v)
    })
}

pub fn enhanced_layer_forward(x: &Tensor, p: &EnhancedLayerParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (b, _) = p.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y = enhanced_layer_on(&mut tape, p, &b, xv, None)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structured::BlockDiagonal;
    use crate::tensor::{self, layer_norm};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn indivisible_heads_is_config_error() {
        let shape = AttentionShape {
            seq_len: 4,
            d_in: 6,
            heads: 4,
            d_out: 6,
        };
        let err = SurrogateAttentionParams::new(shape, BlockInit::Random, &mut rng(0)).unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }

    #[test]
    fn zero_input_gives_zero_everywhere() {
        let shape = AttentionShape {
            seq_len: 9,
            d_in: 8,
            heads: 2,
            d_out: 5,
        };
        let p = SurrogateAttentionParams::new(shape, BlockInit::Random, &mut rng(1)).unwrap();
        let x = Tensor::zeros(&[9, 8]);
        for (q, k, v) in structured_projection(&x, &p).unwrap() {
            assert_eq!(q.max_abs() + k.max_abs() + v.max_abs(), 0.0);
        }
        assert_eq!(surrogate_attention_forward(&x, &p).unwrap().max_abs(), 0.0);

        for act in [Activation::Relu, Activation::Gelu, Activation::Identity] {
            let f = SurrogateFfnParams::new(8, act, BlockInit::Random, &mut rng(2)).unwrap();
            assert_eq!(surrogate_ffn_forward(&x, &f).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn identity_projection_permutes_chunk_columns() {
        let shape = AttentionShape {
            seq_len: 4,
            d_in: 8,
            heads: 2,
            d_out: 8,
        };
        let p = SurrogateAttentionParams::new(shape, BlockInit::Identity, &mut rng(0)).unwrap();
        let x = Tensor::randn(&[4, 8], 1.0, &mut rng(5));
        let perm = p.q[0].permutation().clone();
        for (h, (q, k, v)) in structured_projection(&x, &p).unwrap().into_iter().enumerate() {
            for r in 0..4 {
                for c in 0..4 {
                    // X·P picks column h(c) of the chunk
                    let expect = x.at(r, h * 4 + perm.apply(c));
                    assert_eq!(q.at(r, c), expect);
                    assert_eq!(k.at(r, c), expect);
                    assert_eq!(v.at(r, c), expect);
                }
            }
        }
    }

    #[test]
    fn single_head_projection_matches_dense_seed_11() {
        let shape = AttentionShape {
            seq_len: 4,
            d_in: 4,
            heads: 1,
            d_out: 4,
        };
        let mut r = rng(11);
        let p = SurrogateAttentionParams::new(shape, BlockInit::Random, &mut r).unwrap();
        let x = Tensor::randn(&[4, 4], 1.0, &mut r);
        let (q, _, _) = structured_projection(&x, &p).unwrap().remove(0);
        let dense = tensor::matmul(&x, &p.q[0].to_dense()).unwrap();
        assert!(q.max_abs_diff(&dense).unwrap() <= 1e-10);
    }

    #[test]
    fn short_term_matrices_give_x0_squared_x1() {
        let mut l1 = BlockDiagonal::zeros(2);
        l1.set_dense(0, 0, 1.0).unwrap();
        let r1 = l1.clone();
        let mut l2 = BlockDiagonal::zeros(2);
        l2.set_dense(2, 2, 1.0).unwrap();
        let mut r2 = BlockDiagonal::zeros(2);
        r2.set_dense(1, 0, 1.0).unwrap();
        let m1 = MonarchMatrix::from_factors(l1, r1).unwrap();
        let m2 = MonarchMatrix::from_factors(l2, r2).unwrap();
        let x = Tensor::new(vec![4, 1], vec![2.0, 3.0, 5.0, 7.0]).unwrap();
        let y = sequence_mixing(&m1, &m2, &x, &x, &x).unwrap();
        assert_eq!(y.at(1, 0), 12.0);
    }

    #[test]
    fn ffn_identity_activation_matches_dense_seed_5() {
        let mut r = rng(5);
        let f = SurrogateFfnParams::new(4, Activation::Identity, BlockInit::Random, &mut r).unwrap();
        let x = Tensor::randn(&[3, 4], 1.0, &mut r);
        let dense = tensor::matmul(
            &tensor::matmul(&x, &f.m1.to_dense()).unwrap(),
            &f.m2.to_dense(),
        )
        .unwrap();
        assert!(surrogate_ffn_forward(&x, &f).unwrap().max_abs_diff(&dense).unwrap() <= 1e-10);
    }

    #[test]
    fn ffn_width_one_collapses_to_scalars() {
        let scalar = |v: f64| Tensor::from_rows(&[vec![v]]).unwrap();
        let mk = |l: f64, r: f64| {
            MonarchMatrix::new(
                1,
                MonarchInit::Explicit {
                    left: vec![scalar(l)],
                    right: vec![scalar(r)],
                },
                &mut rng(0),
            )
            .unwrap()
        };
        let f = SurrogateFfnParams {
            width: pad_to_square(1),
            m1: mk(0.5, -3.0),
            m2: mk(2.0, 0.25),
            activation: Activation::Relu,
        };
        let x = Tensor::new(vec![2, 1], vec![-1.0, 2.0]).unwrap();
        let y = surrogate_ffn_forward(&x, &f).unwrap();
        let expect = |x: f64| (x * 0.5 * -3.0).max(0.0) * 2.0 * 0.25;
        assert_eq!(y.data(), &[expect(-1.0), expect(2.0)]);
    }

    #[test]
    fn zero_blocks_reduce_layer_to_norms_or_passthrough() {
        let x = Tensor::randn(&[4, 4], 1.0, &mut rng(8));
        let post = EnhancedLayerParams::new(4, 4, 1, NormStyle::PostLn, Activation::Gelu, BlockInit::Zero, &mut rng(0)).unwrap();
        let g = Tensor::ones(&[4]);
        let b = Tensor::zeros(&[4]);
        let expect = layer_norm(&layer_norm(&x, &g, &b).unwrap(), &g, &b).unwrap();
        assert!(enhanced_layer_forward(&x, &post).unwrap().max_abs_diff(&expect).unwrap() < 1e-15);

        let pre = EnhancedLayerParams { norm: NormStyle::PreLn, ..post };
        assert_eq!(enhanced_layer_forward(&x, &pre).unwrap(), x);
    }

    #[test]
    fn sequence_longer_than_padding_is_rejected() {
        let shape = AttentionShape {
            seq_len: 4,
            d_in: 4,
            heads: 1,
            d_out: 4,
        };
        let p = SurrogateAttentionParams::new(shape, BlockInit::Random, &mut rng(0)).unwrap();
        assert!(surrogate_attention_forward(&Tensor::zeros(&[5, 4]), &p).is_err());
        // fewer rows than N is fine
        assert!(surrogate_attention_forward(&Tensor::zeros(&[3, 4]), &p).is_ok());
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[2, 2]));
        let mut d = Dropout::new(0.0, rng(0));
        assert_eq!(d.apply(&mut tape, x).unwrap(), x);
    }
}

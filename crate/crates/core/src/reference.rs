//! Dense baselines: multi-head softmax attention, the two-layer FFN, synthetic
//! diagonal and vertical scoring patterns, and the sum-of-convolutions form.

use rand::seq::index::sample;
use rand::Rng;

use crate::autograd::{Parameterized, Tape, Var};
use crate::error::{config_err, dim_err, Result};
use crate::surrogate::{residual, Dropout, NormParams, NormStyle};
use crate::tensor::{self, Activation, Tensor};

#[derive(Clone, Debug)]
pub struct DenseMhsaParams {
    /// Per-head `D_in × D_k`.
    pub w_qry: Vec<Tensor>,
    /// Per-head `D_in × D_k`.
    pub w_key: Vec<Tensor>,
    /// Per-head `D_in × D_v`.
    pub w_val: Vec<Tensor>,
    /// `(H·D_v) × D_out`, applied to the concatenated heads.
    pub w_out: Tensor,
}

impl DenseMhsaParams {
    pub fn new<R: Rng + ?Sized>(d_in: usize, heads: usize, d_k: usize, d_v: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || d_in == 0 || d_k == 0 || d_v == 0 || d_out == 0 {
            return config_err("attention extents must be positive");
        }
        let std_in = (1.0 / d_in as f64).sqrt();
        let mut draw = |cols: usize| -> Vec<Tensor> {
            (0..heads).map(|_| Tensor::randn(&[d_in, cols], std_in, rng)).collect()
        };
        let w_qry = draw(d_k);
        let w_key = draw(d_k);
        let w_val = draw(d_v);
        let w_out = Tensor::randn(&[heads * d_v, d_out], (1.0 / (heads * d_v) as f64).sqrt(), rng);
        Ok(Self {
            w_qry,
            w_key,
            w_val,
            w_out,
        })
    }

    pub fn heads(&self) -> usize {
        self.w_qry.len()
    }

    fn d_k(&self) -> usize {
        self.w_qry[0].cols()
    }

    fn validate(&self) -> Result<()> {
        let h = self.heads();
        if h == 0 || self.w_key.len() != h || self.w_val.len() != h {
            return dim_err(format!(
                "head counts differ: {} queries, {} keys, {} values",
                h,
                self.w_key.len(),
                self.w_val.len()
            ));
        }
        let d_in = self.w_qry[0].rows();
        let (d_k, d_v) = (self.d_k(), self.w_val[0].cols());
        for i in 0..h {
            let ok = self.w_qry[i].shape() == [d_in, d_k]
                && self.w_key[i].shape() == [d_in, d_k]
                && self.w_val[i].shape() == [d_in, d_v];
            if !ok {
                return dim_err(format!("head {i} projection shapes are inconsistent"));
            }
        }
        if self.w_out.ndim() != 2 || self.w_out.rows() != h * d_v {
            return dim_err(format!(
                "W_out has shape {:?}, expected {} rows",
                self.w_out.shape(),
                h * d_v
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DenseMhsaVars {
    pub w_qry: Vec<Var>,
    pub w_key: Vec<Var>,
    pub w_val: Vec<Var>,
    pub w_out: Var,
}

impl Parameterized for DenseMhsaParams {
    type Bound = DenseMhsaVars;

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        out.extend(&self.w_qry);
        out.extend(&self.w_key);
        out.extend(&self.w_val);
        out.push(&self.w_out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(&mut self.w_qry);
        out.extend(&mut self.w_key);
        out.extend(&mut self.w_val);
        out.push(&mut self.w_out);
        out
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> DenseMhsaVars {
        let h = self.heads();
        let w_qry = vars.take(h).collect();
        let w_key = vars.take(h).collect();
        let w_val = vars.take(h).collect();
        let w_out = vars.next().expect("W_out");
        DenseMhsaVars {
            w_qry,
            w_key,
            w_val,
            w_out,
        }
    }
}

/// Output and per-head scoring matrices of a tape forward pass.
pub struct MhsaTrace {
    pub output: Var,
    pub scores: Vec<Var>,
}

pub fn dense_mhsa_on(tape: &mut Tape, p: &DenseMhsaParams, b: &DenseMhsaVars, x: Var) -> Result<MhsaTrace> {
    p.validate()?;
    let d_in = p.w_qry[0].rows();
    if tape.value(x).dims2()?.1 != d_in {
        return dim_err(format!(
            "dense attention expects {d_in} input features, got shape {:?}",
            tape.value(x).shape()
        ));
    }
    let inv_sqrt = 1.0 / (p.d_k() as f64).sqrt();
    let mut heads = Vec::with_capacity(p.heads());
    let mut scores = Vec::with_capacity(p.heads());
    for h in 0..p.heads() {
        let q = tape.matmul(x, b.w_qry[h])?;
        let k = tape.matmul(x, b.w_key[h])?;
        let v = tape.matmul(x, b.w_val[h])?;
        let kt = tape.transpose(k)?;
        let logits = tape.matmul(q, kt)?;
        let logits = tape.scale(logits, inv_sqrt);
        let a = tape.softmax_rows(logits)?;
        heads.push(tape.matmul(a, v)?);
        scores.push(a);
    }
    let cat = tape.concat_cols(&heads)?;
    let output = tape.matmul(cat, b.w_out)?;
    Ok(MhsaTrace { output, scores })
}

/// Softmax attention with concatenated heads; also returns each head's
/// scoring matrix.
pub fn dense_mhsa_with_scores(x: &Tensor, p: &DenseMhsaParams) -> Result<(Tensor, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let (b, _) = p.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let trace = dense_mhsa_on(&mut tape, p, &b, xv)?;
    let scores = trace.scores.iter().map(|&s| tape.value(s).clone()).collect();
    Ok((tape.value(trace.output).clone(), scores))
}

pub fn dense_mhsa_forward(x: &Tensor, p: &DenseMhsaParams) -> Result<Tensor> {
    Ok(dense_mhsa_with_scores(x, p)?.0)
}

/// `σ(X·W1)·W2ᵀ` with `W1, W2` both `D_in × D_m`.
pub fn dense_ffn_forward(x: &Tensor, w1: &Tensor, w2: &Tensor, sigma: Activation) -> Result<Tensor> {
    if w1.shape() != w2.shape() {
        return dim_err(format!(
            "FFN weights differ in shape: {:?} vs {:?}",
            w1.shape(),
            w2.shape()
        ));
    }
    let h = tensor::activation(&tensor::matmul(x, w1)?, sigma);
    tensor::matmul(&h, &w2.transpose()?)
}

pub fn dense_ffn_on(tape: &mut Tape, w1: Var, w2: Var, sigma: Activation, x: Var) -> Result<Var> {
    let h = tape.matmul(x, w1)?;
    let h = tape.activation(h, sigma);
    let w2t = tape.transpose(w2)?;
    tape.matmul(h, w2t)
}

/// Dense encoder layer: softmax attention and the two-layer FFN under the
/// same residual styles as the enhanced layer.
#[derive(Clone, Debug)]
pub struct DenseLayerParams {
    pub attn: DenseMhsaParams,
    pub w1: Tensor,
    pub w2: Tensor,
    pub activation: Activation,
    pub norm: NormStyle,
    pub ln1: NormParams,
    pub ln2: NormParams,
}

impl DenseLayerParams {
    pub fn new<R: Rng + ?Sized>(
        d_model: usize,
        heads: usize,
        d_ff: usize,
        norm: NormStyle,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if d_model % heads != 0 {
            return config_err(format!("D_model = {d_model} is not divisible by H = {heads}"));
        }
        let d_head = d_model / heads;
        let attn = DenseMhsaParams::new(d_model, heads, d_head, d_head, d_model, rng)?;
        let std = (1.0 / d_model as f64).sqrt();
        Ok(Self {
            attn,
            w1: Tensor::randn(&[d_model, d_ff], std, rng),
            w2: Tensor::randn(&[d_model, d_ff], (1.0 / d_ff as f64).sqrt(), rng),
            activation,
            norm,
            ln1: NormParams::new(d_model),
            ln2: NormParams::new(d_model),
        })
    }
}

#[derive(Clone, Debug)]
pub struct DenseLayerVars {
    pub attn: DenseMhsaVars,
    pub w1: Var,
    pub w2: Var,
    pub ln1: (Var, Var),
    pub ln2: (Var, Var),
}

impl Parameterized for DenseLayerParams {
    type Bound = DenseLayerVars;

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.attn.tensors();
        out.extend([
            &self.w1,
            &self.w2,
            &self.ln1.gain,
            &self.ln1.bias,
            &self.ln2.gain,
            &self.ln2.bias,
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.attn.tensors_mut();
        out.extend([
            &mut self.w1,
            &mut self.w2,
            &mut self.ln1.gain,
            &mut self.ln1.bias,
            &mut self.ln2.gain,
            &mut self.ln2.bias,
        ]);
        out
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> DenseLayerVars {
        let attn = self.attn.attach(vars);
        let mut next = || vars.next().expect("dense layer parameter");
        DenseLayerVars {
            attn,
            w1: next(),
            w2: next(),
            ln1: (next(), next()),
            ln2: (next(), next()),
        }
    }
}

pub fn dense_layer_on(
    tape: &mut Tape,
    p: &DenseLayerParams,
    b: &DenseLayerVars,
    x: Var,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let x1 = residual(tape, p.norm, x, b.ln1.0, b.ln1.1, dropout.as_deref_mut(), |t, v| {
        Ok(dense_mhsa_on(t, &p.attn, &b.attn, v)?.output)
    })?;
    residual(tape, p.norm, x1, b.ln2.0, b.ln2.1, dropout, |t, v| {
        dense_ffn_on(t, b.w1, b.w2, p.activation, v)
    })
}

/// Query-independent scoring pattern over `n` positions.
#[derive(Clone, Debug, PartialEq)]
pub enum AttentionPattern {
    /// Band of `λ` circular offsets `δ ∈ {−⌊λ/2⌋..⌊λ/2⌋}`; `weights[j]` is
    /// `f(j − ⌊λ/2⌋)`.
    Diagonal { n: usize, weights: Vec<f64> },
    /// `λ` significant columns with weights `g`.
    Vertical {
        n: usize,
        columns: Vec<usize>,
        weights: Vec<f64>,
    },
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
        return config_err("pattern weights must lie in (0, 1]");
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return config_err(format!("pattern weights sum to {total}, not 1"));
    }
    Ok(())
}

/// Draws `len` weights uniform on `[0.1, 1)` and normalizes them.
fn random_weights<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

impl AttentionPattern {
    pub fn diagonal(n: usize, weights: Vec<f64>) -> Result<Self> {
        let lambda = weights.len();
        if lambda % 2 == 0 {
            return config_err(format!("diagonal band width must be odd, got {lambda}"));
        }
        if lambda > n {
            return config_err(format!("band width {lambda} exceeds sequence length {n}"));
        }
        check_weights(&weights)?;
        Ok(Self::Diagonal { n, weights })
    }

    pub fn vertical(n: usize, columns: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if columns.len() != weights.len() || columns.is_empty() {
            return config_err("need one weight per significant column");
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= n) {
            return config_err(format!("column {c} is outside [0, {n})"));
        }
        let mut sorted = columns.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return config_err(format!("duplicate significant columns in {columns:?}"));
        }
        check_weights(&weights)?;
        Ok(Self::Vertical { n, columns, weights })
    }

    pub fn random_diagonal<R: Rng + ?Sized>(n: usize, lambda: usize, rng: &mut R) -> Result<Self> {
        if lambda % 2 == 0 || lambda == 0 {
            return config_err(format!("diagonal band width must be odd, got {lambda}"));
        }
        Self::diagonal(n, random_weights(lambda, rng))
    }

    pub fn random_vertical<R: Rng + ?Sized>(n: usize, lambda: usize, rng: &mut R) -> Result<Self> {
        if lambda == 0 || lambda > n {
            return config_err(format!("need 1 ≤ λ ≤ {n}, got {lambda}"));
        }
        let columns = sample(rng, n, lambda).into_vec();
        Self::vertical(n, columns, random_weights(lambda, rng))
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Diagonal { n, .. } | Self::Vertical { n, .. } => *n,
        }
    }

    /// `(δ, f(δ))` pairs of a diagonal pattern.
    pub fn offsets(&self) -> Vec<(isize, f64)> {
        match self {
            Self::Diagonal { weights, .. } => {
                let half = (weights.len() / 2) as isize;
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| (j as isize - half, w))
                    .collect()
            }
            Self::Vertical { .. } => Vec::new(),
        }
    }
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Materializes the scoring matrix; every row sums to one.
pub fn pattern_matrix(p: &AttentionPattern) -> Tensor {
    let n = p.n();
    let mut a = Tensor::zeros(&[n, n]);
    match p {
        AttentionPattern::Diagonal { .. } => {
            for q in 0..n {
                for (delta, f) in p.offsets() {
                    a.set(q, wrap(q as isize - delta, n), f);
                }
            }
        }
        AttentionPattern::Vertical { columns, weights, .. } => {
            for q in 0..n {
                for (&k, &g) in columns.iter().zip(weights) {
                    a.set(q, k, g);
                }
            }
        }
    }
    a
}

/// `Σ_h A(h)·X·W(h)` with externally imposed scoring matrices.
pub fn patterned_mhsa_forward(x: &Tensor, scores: &[Tensor], weights: &[Tensor]) -> Result<Tensor> {
    if scores.len() != weights.len() || scores.is_empty() {
        return dim_err(format!(
            "{} scoring matrices for {} weight matrices",
            scores.len(),
            weights.len()
        ));
    }
    let mut out: Option<Tensor> = None;
    for (a, w) in scores.iter().zip(weights) {
        let y = tensor::matmul(&tensor::matmul(a, x)?, w)?;
        out = Some(match out {
            Some(acc) => tensor::add(&acc, &y)?,
            None => y,
        });
    }
    Ok(out.expect("non-empty"))
}

/// Matrix-valued taps `{δ → W_δ}` of one circular 1-D convolution.
#[derive(Clone, Debug)]
pub struct ConvKernel {
    pub taps: Vec<(isize, Tensor)>,
}

impl ConvKernel {
    /// `W_δ = f(δ)·W` for each offset of a diagonal pattern.
    pub fn from_pattern(p: &AttentionPattern, w: &Tensor) -> Self {
        Self {
            taps: p.offsets().into_iter().map(|(d, f)| (d, w.scale(f))).collect(),
        }
    }
}

/// Row `q` of the output is `Σ_h Σ_δ X[(q−δ) mod N]·W_δ(h)`.
pub fn sum_of_convs_forward(x: &Tensor, kernels: &[ConvKernel]) -> Result<Tensor> {
    let (n, d_in) = x.dims2()?;
    let d_out = kernels
        .iter()
        .flat_map(|k| k.taps.first())
        .map(|(_, w)| w.cols())
        .next()
        .unwrap_or(d_in);
    let mut out = Tensor::zeros(&[n, d_out]);
    for kernel in kernels {
        for (delta, w) in &kernel.taps {
            if w.shape() != [d_in, d_out] {
                return dim_err(format!(
                    "tap {delta} has shape {:?}, expected [{d_in}, {d_out}]",
                    w.shape()
                ));
            }
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|q| x.row(wrap(q as isize - delta, n)).to_vec())
                .collect();
            let shifted = Tensor::from_rows(&rows)?;
            out.add_assign(&tensor::matmul(&shifted, w)?);
        }
    }
    Ok(out)
}

/// `Σ_h Σ_{k∈K̃} g(k)·X[k,:]·W(h)`, broadcast to all `N` rows.
pub fn fixed_tap_forward(x: &Tensor, columns: &[usize], g: &[f64], weights: &[Tensor]) -> Result<Tensor> {
    let (n, d_in) = x.dims2()?;
    let mut pooled = vec![0.0; d_in];
    for (&k, &gk) in columns.iter().zip(g) {
        if k >= n {
            return dim_err(format!("column {k} is outside [0, {n})"));
        }
        for (p, v) in pooled.iter_mut().zip(x.row(k)) {
            *p += gk * v;
        }
    }
    let pooled = Tensor::new(vec![1, d_in], pooled)?;
    let mut row: Option<Tensor> = None;
    for w in weights {
        let y = tensor::matmul(&pooled, w)?;
        row = Some(match row {
            Some(acc) => tensor::add(&acc, &y)?,
            None => y,
        });
    }
    let row = row.ok_or_else(|| crate::Error::Dimension("no head weights".into()))?;
    Tensor::from_rows(&vec![row.data().to_vec(); n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_queries_give_uniform_attention() {
        let mut r = rng(0);
        let mut p = DenseMhsaParams::new(3, 1, 3, 3, 3, &mut r).unwrap();
        p.w_qry[0] = Tensor::zeros(&[3, 3]);
        p.w_val[0] = Tensor::eye(3);
        p.w_out = Tensor::eye(3);
        let x = Tensor::randn(&[5, 3], 1.0, &mut r);
        let y = dense_mhsa_forward(&x, &p).unwrap();
        for c in 0..3 {
            let mean = (0..5).map(|i| x.at(i, c)).sum::<f64>() / 5.0;
            for q in 0..5 {
                assert!((y.at(q, c) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_position_passes_values_through() {
        let mut r = rng(1);
        let mut p = DenseMhsaParams::new(4, 1, 2, 3, 3, &mut r).unwrap();
        p.w_out = Tensor::eye(3);
        let x = Tensor::randn(&[1, 4], 1.0, &mut r);
        let y = dense_mhsa_forward(&x, &p).unwrap();
        assert!(y.max_abs_diff(&tensor::matmul(&x, &p.w_val[0]).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn scoring_rows_sum_to_one_seed_2() {
        let mut r = rng(2);
        let p = DenseMhsaParams::new(6, 2, 3, 3, 6, &mut r).unwrap();
        let x = Tensor::randn(&[8, 6], 1.0, &mut r);
        let (_, scores) = dense_mhsa_with_scores(&x, &p).unwrap();
        for a in scores {
            for q in 0..8 {
                assert!((a.row(q).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ffn_trivial_cases() {
        let mut r = rng(3);
        let x = Tensor::randn(&[3, 4], 1.0, &mut r);
        let eye = Tensor::eye(4);
        assert_eq!(dense_ffn_forward(&x, &eye, &eye, Activation::Identity).unwrap(), x);
        let w1 = Tensor::randn(&[4, 6], 1.0, &mut r);
        let w2 = Tensor::randn(&[4, 6], 1.0, &mut r);
        assert_eq!(dense_ffn_forward(&Tensor::zeros(&[3, 4]), &w1, &w2, Activation::Gelu).unwrap().max_abs(), 0.0);
        assert!(dense_ffn_forward(&x, &w1, &Tensor::zeros(&[4, 5]), Activation::Relu).is_err());
    }

    #[test]
    fn diagonal_pattern_layouts() {
        let id = pattern_matrix(&AttentionPattern::diagonal(5, vec![1.0]).unwrap());
        assert_eq!(id, Tensor::eye(5));

        let third = 1.0 / 3.0;
        let band = pattern_matrix(&AttentionPattern::diagonal(4, vec![third; 3]).unwrap());
        let expect = Tensor::from_rows(&[
            vec![third, third, 0.0, third],
            vec![third, third, third, 0.0],
            vec![0.0, third, third, third],
            vec![third, 0.0, third, third],
        ])
        .unwrap();
        assert_eq!(band, expect);
        assert!(AttentionPattern::diagonal(4, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn vertical_pattern_layout_and_errors() {
        let v = pattern_matrix(&AttentionPattern::vertical(4, vec![0, 2], vec![0.5, 0.5]).unwrap());
        for q in 0..4 {
            assert_eq!(v.row(q), &[0.5, 0.0, 0.5, 0.0]);
        }
        assert!(AttentionPattern::vertical(4, vec![1, 1], vec![0.5, 0.5]).is_err());
        assert!(AttentionPattern::vertical(4, vec![4], vec![1.0]).is_err());
    }

    #[test]
    fn random_patterns_are_row_stochastic() {
        let mut r = rng(4);
        for _ in 0..20 {
            for p in [
                AttentionPattern::random_diagonal(16, 5, &mut r).unwrap(),
                AttentionPattern::random_vertical(16, 4, &mut r).unwrap(),
            ] {
                let a = pattern_matrix(&p);
                for q in 0..16 {
                    assert!((a.row(q).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_trivial_and_moving_average() {
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![4.0], vec![8.0]]).unwrap();
        let unit = ConvKernel {
            taps: vec![(0, Tensor::eye(1))],
        };
        assert_eq!(sum_of_convs_forward(&x, &[unit]).unwrap(), x);

        let avg = ConvKernel {
            taps: (-1..=1).map(|d| (d, Tensor::filled(&[1, 1], 1.0 / 3.0))).collect(),
        };
        let y = sum_of_convs_forward(&x, &[avg]).unwrap();
        let expect = [(8.0 + 1.0 + 2.0) / 3.0, 7.0 / 3.0, 14.0 / 3.0, 13.0 / 3.0];
        for (q, e) in expect.iter().enumerate() {
            assert!((y.at(q, 0) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_pattern_gives_mean_row_times_weight_sum() {
        let mut r = rng(6);
        let x = Tensor::randn(&[4, 3], 1.0, &mut r);
        let a = Tensor::filled(&[4, 4], 0.25);
        let w = [Tensor::randn(&[3, 2], 1.0, &mut r), Tensor::randn(&[3, 2], 1.0, &mut r)];
        let y = patterned_mhsa_forward(&x, &[a.clone(), a], &w).unwrap();
        let mean: Vec<Vec<f64>> = vec![(0..3).map(|c| (0..4).map(|i| x.at(i, c)).sum::<f64>() / 4.0).collect()];
        let wsum = tensor::add(&w[0], &w[1]).unwrap();
        let expect = tensor::matmul(&Tensor::from_rows(&mean).unwrap(), &wsum).unwrap();
        for q in 0..4 {
            for c in 0..2 {
                assert!((y.at(q, c) - expect.at(0, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_column_fixed_tap() {
        let mut r = rng(7);
        let x = Tensor::randn(&[5, 3], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2], 1.0, &mut r);
        let y = fixed_tap_forward(&x, &[3], &[1.0], std::slice::from_ref(&w)).unwrap();
        let row = tensor::matmul(&Tensor::new(vec![1, 3], x.row(3).to_vec()).unwrap(), &w).unwrap();
        for q in 0..5 {
            assert_eq!(y.row(q), row.data());
        }
    }
}

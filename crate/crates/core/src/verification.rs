//! Executable equivalence checks with pinned thresholds.
//!
//! Every check compares two independently computed quantities and records
//! the worst absolute difference over its seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::gradcheck::{check_gradients, GradCheckConfig};
use crate::autograd::Parameterized;
use crate::error::{config_err, Result};
use crate::reference::{
    fixed_tap_forward, pattern_matrix, patterned_mhsa_forward, sum_of_convs_forward, AttentionPattern, ConvKernel,
};
use crate::structured::{monarch_param_count, BlockDiagonal, MonarchMatrix, Side};
use crate::surrogate::{
    enhanced_layer_on, sequence_mixing, surrogate_attention_forward, surrogate_ffn_forward, AttentionShape, BlockInit,
    EnhancedLayerParams, NormStyle, SurrogateAttentionParams, SurrogateFfnParams,
};
use crate::tensor::{self, Activation, Tensor};

/// Accumulated float error over `N` terms.
pub const THEOREM_TOL: f64 = 1e-8;
/// Two evaluation orders of the same structured product.
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Exact polynomial identities and copies.
pub const EXACT_TOL: f64 = 1e-12;
/// Whole surrogate blocks against their dense brute-force compositions.
pub const BLOCK_ORACLE_TOL: f64 = 1e-9;
pub const GRAD_REL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    #[serde(deserialize_with = "f64_or_nan")]
    pub max_abs_diff: f64,
    pub threshold: f64,
    pub passed: bool,
    pub seeds_run: usize,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, max_abs_diff: f64, threshold: f64, seeds_run: usize) -> Self {
        Self {
            name: name.into(),
            max_abs_diff,
            threshold,
            passed: max_abs_diff <= threshold,
            seeds_run,
        }
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        Self::new(self.name, self.max_abs_diff, threshold, self.seeds_run)
    }
}

/// Reads `null` (how JSON writes a non-finite float) back as NaN.
pub(crate) fn f64_or_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn seeded(base: u64, stream: u64, seed: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(seed as u64));
    rng.set_stream(stream);
    rng
}

fn worst(acc: f64, d: f64) -> f64 {
    if d.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.max(d)
    }
}

/// One point of the theorem grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremCase {
    pub n: usize,
    pub lambda: usize,
    pub heads: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl TheoremCase {
    pub fn new(n: usize, lambda: usize, heads: usize) -> Self {
        Self {
            n,
            lambda,
            heads,
            d_in: 8,
            d_out: 4,
        }
    }

    fn label(&self) -> String {
        format!("N={},λ={},H={}", self.n, self.lambda, self.heads)
    }
}

fn head_weights(case: &TheoremCase, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    (0..case.heads)
        .map(|_| Tensor::randn(&[case.d_in, case.d_out], 1.0, rng))
        .collect()
}

/// Diagonal-pattern attention against the circular sum of convolutions.
pub fn check_theorem_diagonal(case: TheoremCase, seeds: usize, base_seed: u64) -> Result<CheckResult> {
    if case.lambda % 2 == 0 {
        return config_err(format!("diagonal band width must be odd, got {}", case.lambda));
    }
    if case.lambda > case.n {
        return config_err(format!("λ = {} exceeds N = {}", case.lambda, case.n));
    }
    let mut diff = 0.0_f64;
    for s in 0..seeds {
        let mut rng = seeded(base_seed, 1, s);
        let pattern = AttentionPattern::random_diagonal(case.n, case.lambda, &mut rng)?;
        let w = head_weights(&case, &mut rng);
        let x = Tensor::randn(&[case.n, case.d_in], 1.0, &mut rng);
        let a = pattern_matrix(&pattern);
        let lhs = patterned_mhsa_forward(&x, &vec![a; case.heads], &w)?;
        let kernels: Vec<ConvKernel> = w.iter().map(|wh| ConvKernel::from_pattern(&pattern, wh)).collect();
        let rhs = sum_of_convs_forward(&x, &kernels)?;
        diff = worst(diff, lhs.max_abs_diff(&rhs)?);
    }
    Ok(CheckResult::new(
        format!("theorem_diagonal[{}]", case.label()),
        diff,
        THEOREM_TOL,
        seeds,
    ))
}

/// Vertical-pattern attention against the fixed-tap form, plus the
/// all-rows-identical consequence.
pub fn check_theorem_vertical(case: TheoremCase, seeds: usize, base_seed: u64) -> Result<(CheckResult, CheckResult)> {
    if case.lambda == 0 || case.lambda > case.n {
        return config_err(format!("need 1 ≤ λ ≤ N, got λ = {} and N = {}", case.lambda, case.n));
    }
    let mut diff = 0.0_f64;
    let mut row_diff = 0.0_f64;
    for s in 0..seeds {
        let mut rng = seeded(base_seed, 2, s);
        let pattern = AttentionPattern::random_vertical(case.n, case.lambda, &mut rng)?;
        let AttentionPattern::Vertical { columns, weights, .. } = &pattern else {
            unreachable!("random_vertical builds a vertical pattern")
        };
        let w = head_weights(&case, &mut rng);
        let x = Tensor::randn(&[case.n, case.d_in], 1.0, &mut rng);
        let a = pattern_matrix(&pattern);
        let lhs = patterned_mhsa_forward(&x, &vec![a; case.heads], &w)?;
        let rhs = fixed_tap_forward(&x, columns, weights, &w)?;
        diff = worst(diff, lhs.max_abs_diff(&rhs)?);
        for q in 1..case.n {
            for (u, v) in lhs.row(q).iter().zip(lhs.row(0)) {
                row_diff = worst(row_diff, (u - v).abs());
            }
        }
    }
    let label = case.label();
    Ok((
        CheckResult::new(format!("theorem_vertical[{label}]"), diff, THEOREM_TOL, seeds),
        CheckResult::new(format!("theorem_vertical_rows[{label}]"), row_diff, EXACT_TOL, seeds),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyMode {
    /// `y_k = x_k · x_{k−1}²`
    ShortTerm,
    /// `y_k = x_k · x_0²`
    LongTerm,
}

/// Sequence Monarchs whose mixing reproduces a single product dependency.
#[derive(Clone, Debug)]
pub struct ExpressivenessConstruction {
    pub n: usize,
    pub mode: DependencyMode,
    pub k: usize,
    pub l1: BlockDiagonal,
    pub r1: BlockDiagonal,
    pub l2: BlockDiagonal,
    pub r2: BlockDiagonal,
}

impl ExpressivenessConstruction {
    /// Position whose square multiplies `x_k`.
    pub fn source(&self) -> usize {
        match self.mode {
            DependencyMode::ShortTerm => self.k - 1,
            DependencyMode::LongTerm => 0,
        }
    }

    pub fn monarchs(&self) -> Result<(MonarchMatrix, MonarchMatrix)> {
        Ok((
            MonarchMatrix::from_factors(self.l1.clone(), self.r1.clone())?,
            MonarchMatrix::from_factors(self.l2.clone(), self.r2.clone())?,
        ))
    }

    /// Closed form of `y_k`.
    pub fn expected(&self, x: &[f64]) -> f64 {
        let s = x[self.source()];
        x[self.k] * s * s
    }
}

/// Sets `L`, `R` so that `P·L·P·R·P` has a single unit entry at `(r, c)`.
///
/// Entry `(r, c)` of the product is `Σ_i L[h(r), h(i)]·R[i, h(c)]`; block
/// structure leaves exactly one admissible `i`.
fn place_unit(l: &mut BlockDiagonal, r: &mut BlockDiagonal, row: usize, col: usize) -> Result<()> {
    let b = l.block_size();
    let h = |i: usize| i / b + b * (i % b);
    let i = (col % b) * b + row % b;
    l.set_dense(h(row), h(i), 1.0)?;
    r.set_dense(i, h(col), 1.0)
}

pub fn build_expressiveness(n: usize, mode: DependencyMode, k: usize) -> Result<ExpressivenessConstruction> {
    let Some(b) = crate::structured::exact_sqrt(n) else {
        return config_err(format!("N = {n} is not a perfect square"));
    };
    if k == 0 || k >= n {
        return config_err(format!("target index must satisfy 1 ≤ k < {n}, got {k}"));
    }
    let mut c = ExpressivenessConstruction {
        n,
        mode,
        k,
        l1: BlockDiagonal::zeros(b),
        r1: BlockDiagonal::zeros(b),
        l2: BlockDiagonal::zeros(b),
        r2: BlockDiagonal::zeros(b),
    };
    let s = c.source();
    place_unit(&mut c.l1, &mut c.r1, s, s)?;
    place_unit(&mut c.l2, &mut c.r2, k, s)?;
    Ok(c)
}

/// Runs sequence mixing with `q = k = v = x` and compares `y_k` with its
/// closed form for `seeds` random inputs.
pub fn check_expressiveness(c: &ExpressivenessConstruction, seeds: usize, base_seed: u64) -> Result<CheckResult> {
    let (m1, m2) = c.monarchs()?;
    let mut diff = 0.0_f64;
    for s in 0..seeds {
        let mut rng = seeded(base_seed, 3, s);
        let xs: Vec<f64> = (0..c.n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::new(vec![c.n, 1], xs.clone())?;
        let y = sequence_mixing(&m1, &m2, &x, &x, &x)?;
        diff = worst(diff, (y.at(c.k, 0) - c.expected(&xs)).abs());
    }
    let mode = match c.mode {
        DependencyMode::ShortTerm => "short",
        DependencyMode::LongTerm => "long",
    };
    Ok(CheckResult::new(
        format!("expressiveness_{mode}[N={},k={}]", c.n, c.k),
        diff,
        EXACT_TOL,
        seeds,
    ))
}

/// Dense head inputs: column chunk `h`, zero-padded in both axes, times the
/// materialized projections.
fn dense_qkv(x: &Tensor, p: &SurrogateAttentionParams, h: usize) -> Result<(Tensor, Tensor, Tensor)> {
    let width = p.head_width.n;
    let rows: Vec<Vec<f64>> = (0..p.seq.n_pad)
        .map(|r| {
            let mut row = vec![0.0; p.d_head()];
            if r < x.rows() {
                row[..width].copy_from_slice(&x.row(r)[h * width..(h + 1) * width]);
            }
            row
        })
        .collect();
    let chunk = Tensor::from_rows(&rows)?;
    Ok((
        tensor::matmul(&chunk, &p.q[h].to_dense())?,
        tensor::matmul(&chunk, &p.k[h].to_dense())?,
        tensor::matmul(&chunk, &p.v[h].to_dense())?,
    ))
}

fn truncate_rows(x: &Tensor, rows: usize) -> Result<Tensor> {
    Tensor::from_rows(&(0..rows).map(|r| x.row(r).to_vec()).collect::<Vec<_>>())
}

/// Surrogate attention from fully materialized matrices.
pub fn dense_surrogate_attention(x: &Tensor, p: &SurrogateAttentionParams) -> Result<Tensor> {
    let m1 = p.m1.to_dense();
    let m2 = p.m2.to_dense();
    let mut out = Tensor::zeros(&[x.rows(), p.d_out]);
    for h in 0..p.heads {
        let (q, k, v) = dense_qkv(x, p, h)?;
        let a = tensor::elementwise_mul(&tensor::matmul(&m1, &q)?, &k)?;
        let sa = tensor::elementwise_mul(&tensor::matmul(&m2, &a)?, &v)?;
        let sa = truncate_rows(&sa, x.rows())?;
        out = tensor::add(&out, &tensor::matmul(&sa, &p.w_out[h])?)?;
    }
    Ok(out)
}

/// Surrogate FFN from fully materialized matrices.
pub fn dense_surrogate_ffn(x: &Tensor, p: &SurrogateFfnParams) -> Result<Tensor> {
    let lifted = p.width.lift_cols(x)?;
    let h = tensor::activation(&tensor::matmul(&lifted, &p.m1.to_dense())?, p.activation);
    p.width.project_cols(&tensor::matmul(&h, &p.m2.to_dense())?)
}

/// State-space rewrite of a single-head surrogate attention block.
///
/// With `A = 0` and `B = I` the state is `s_t = v_t`. The readout
/// `C[j, d] = K[j, d]·(M1·Q)[j, d]` does not depend on `t`; step `t` emits
/// `y'_t = C ⊙ s_t` (broadcast over `j`) and post-processing contracts it
/// with row `t` of `M2`.
pub struct LtiDecomposition {
    pub readout: Tensor,
    pub transition: Tensor,
    pub input: Tensor,
    pub m2: Tensor,
    pub values: Tensor,
}

impl LtiDecomposition {
    pub fn new(x: &Tensor, p: &SurrogateAttentionParams) -> Result<Self> {
        if p.heads != 1 {
            return config_err(format!("the state-space rewrite treats one head, got H = {}", p.heads));
        }
        let (q, k, v) = dense_qkv(x, p, 0)?;
        let m1 = p.m1.to_dense();
        let (n, d) = q.dims2()?;
        let mut c = Tensor::zeros(&[n, d]);
        for j in 0..n {
            for dd in 0..d {
                let mixed: f64 = (0..n).map(|i| m1.at(j, i) * q.at(i, dd)).sum();
                c.set(j, dd, k.at(j, dd) * mixed);
            }
        }
        Ok(Self {
            readout: c,
            transition: Tensor::zeros(&[d, d]),
            input: Tensor::eye(d),
            m2: p.m2.to_dense(),
            values: v,
        })
    }

    /// `s_t = A·s_{t−1} + B·u_t` from a zero initial state.
    pub fn state_after(&self, inputs: &[&[f64]]) -> Vec<f64> {
        let d = self.transition.rows();
        let mut s = vec![0.0; d];
        for u in inputs {
            s = (0..d)
                .map(|i| {
                    let carry: f64 = (0..d).map(|j| self.transition.at(i, j) * s[j]).sum();
                    let drive: f64 = (0..d).map(|j| self.input.at(i, j) * u[j]).sum();
                    carry + drive
                })
                .collect();
        }
        s
    }

    /// Head output for the first `rows` steps, before `W_out`.
    pub fn head_output(&self, rows: usize) -> Vec<Vec<f64>> {
        let (n, d) = (self.readout.rows(), self.readout.cols());
        let inputs: Vec<&[f64]> = (0..n).map(|t| self.values.row(t)).collect();
        (0..rows)
            .map(|t| {
                let s = self.state_after(&inputs[..=t]);
                (0..d)
                    .map(|dd| (0..n).map(|j| self.m2.at(t, j) * self.readout.at(j, dd) * s[dd]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn output(&self, rows: usize, w_out: &Tensor) -> Result<Tensor> {
        tensor::matmul(&Tensor::from_rows(&self.head_output(rows))?, w_out)
    }
}

fn lti_params(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<SurrogateAttentionParams> {
    let shape = AttentionShape {
        seq_len: n,
        d_in: d,
        heads: 1,
        d_out: d,
    };
    SurrogateAttentionParams::new(shape, BlockInit::Random, rng)
}

/// Dual-path equality of the direct block and its state-space rewrite.
pub fn check_lti_decomposition(n: usize, d: usize, seeds: usize, base_seed: u64) -> Result<CheckResult> {
    let mut diff = 0.0_f64;
    for s in 0..seeds {
        let mut rng = seeded(base_seed, 4, s);
        let p = lti_params(n, d, &mut rng)?;
        let x = Tensor::randn(&[n, d], 1.0, &mut rng);
        let direct = surrogate_attention_forward(&x, &p)?;
        let lti = LtiDecomposition::new(&x, &p)?.output(n, &p.w_out[0])?;
        diff = worst(diff, direct.max_abs_diff(&lti)?);
    }
    Ok(CheckResult::new(
        format!("lti_decomposition[N={n}]"),
        diff,
        STRUCTURAL_TOL,
        seeds,
    ))
}

/// Permuting the inputs before step `t` must leave the state at `t`
/// bit-identical.
pub fn check_lti_memoryless(n: usize, d: usize, seeds: usize, base_seed: u64) -> Result<CheckResult> {
    let mut diff = 0.0_f64;
    for s in 0..seeds {
        let mut rng = seeded(base_seed, 5, s);
        let p = lti_params(n, d, &mut rng)?;
        let x = Tensor::randn(&[n, d], 1.0, &mut rng);
        let lti = LtiDecomposition::new(&x, &p)?;
        let inputs: Vec<&[f64]> = (0..n).map(|t| lti.values.row(t)).collect();
        for t in 1..n {
            let mut shuffled: Vec<&[f64]> = inputs[..t].to_vec();
            shuffled.reverse();
            shuffled.rotate_left(rng.random_range(0..t));
            shuffled.push(inputs[t]);
            let a = lti.state_after(&inputs[..=t]);
            let b = lti.state_after(&shuffled);
            for (u, v) in a.iter().zip(&b) {
                diff = worst(diff, (u - v).abs());
            }
        }
    }
    Ok(CheckResult::new(format!("lti_memoryless[N={n}]"), diff, 0.0, seeds))
}

/// Factored Monarch application against the materialized `P·L·P·R·P`, on
/// both sides.
pub fn check_monarch_oracle(sizes: &[usize], seeds: usize, base_seed: u64) -> Result<CheckResult> {
    let mut diff = 0.0_f64;
    for &n in sizes {
        for s in 0..seeds {
            let mut rng = seeded(base_seed ^ n as u64, 6, s);
            let m = MonarchMatrix::random(n, &mut rng)?;
            let dense = m.to_dense();
            let x = Tensor::randn(&[n, 3], 1.0, &mut rng);
            diff = worst(diff, m.apply(&x, Side::Left)?.max_abs_diff(&tensor::matmul(&dense, &x)?)?);
            let xr = x.transpose()?;
            diff = worst(diff, m.apply(&xr, Side::Right)?.max_abs_diff(&tensor::matmul(&xr, &dense)?)?);
        }
    }
    Ok(CheckResult::new(
        format!("monarch_oracle[n∈{sizes:?}]"),
        diff,
        STRUCTURAL_TOL,
        seeds * sizes.len(),
    ))
}

/// Stored parameters against `2·n^{3/2}`.
pub fn check_param_law(sizes: &[usize]) -> Result<CheckResult> {
    let mut diff = 0.0_f64;
    for &n in sizes {
        let m = MonarchMatrix::zeros(n)?;
        let stored: usize = m.param_count();
        let law = 2.0 * (n as f64).powf(1.5);
        diff = worst(diff, (stored as f64 - law).abs());
        diff = worst(diff, (monarch_param_count(n)? as f64 - law).abs());
    }
    Ok(CheckResult::new(format!("monarch_param_law[n∈{sizes:?}]"), diff, 0.0, sizes.len()))
}

/// `(N, D)` pairs for the block oracles.
pub const BLOCK_ORACLE_SIZES: [(usize, usize); 3] = [(4, 4), (16, 8), (64, 16)];

pub fn check_attention_oracle(sizes: &[(usize, usize)], seeds: usize, base_seed: u64) -> Result<CheckResult> {
    let mut diff = 0.0_f64;
    for &(n, d) in sizes {
        let heads = if d >= 8 { 2 } else { 1 };
        for s in 0..seeds {
            let mut rng = seeded(base_seed ^ (n * 131 + d) as u64, 7, s);
            let shape = AttentionShape {
                seq_len: n,
                d_in: d,
                heads,
                d_out: d,
            };
            let p = SurrogateAttentionParams::new(shape, BlockInit::Random, &mut rng)?;
            let x = Tensor::randn(&[n, d], 1.0, &mut rng);
            let fast = surrogate_attention_forward(&x, &p)?;
            diff = worst(diff, fast.max_abs_diff(&dense_surrogate_attention(&x, &p)?)?);
        }
    }
    Ok(CheckResult::new(
        "surrogate_attention_oracle",
        diff,
        BLOCK_ORACLE_TOL,
        seeds * sizes.len(),
    ))
}

pub fn check_ffn_oracle(sizes: &[(usize, usize)], seeds: usize, base_seed: u64) -> Result<CheckResult> {
    let mut diff = 0.0_f64;
    for &(n, d) in sizes {
        for s in 0..seeds {
            let mut rng = seeded(base_seed ^ (n * 131 + d) as u64, 8, s);
            let act = [Activation::Relu, Activation::Gelu, Activation::Identity][s % 3];
            let p = SurrogateFfnParams::new(d, act, BlockInit::Random, &mut rng)?;
            let x = Tensor::randn(&[n, d], 1.0, &mut rng);
            let fast = surrogate_ffn_forward(&x, &p)?;
            diff = worst(diff, fast.max_abs_diff(&dense_surrogate_ffn(&x, &p)?)?);
        }
    }
    Ok(CheckResult::new("surrogate_ffn_oracle", diff, BLOCK_ORACLE_TOL, seeds * sizes.len()))
}

/// Finite-difference check of every parameter of one enhanced layer
/// (`N = 4`, `D = 16`, `H = 4`, GELU). `max_abs_diff` carries the worst
/// relative error.
pub fn check_layer_gradients(norm: NormStyle, probes: Option<usize>, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = EnhancedLayerParams::new(4, 16, 4, norm, Activation::Gelu, BlockInit::Random, &mut rng)?;
    // Move norms away from the identity so their gradients are generic.
    for t in [&mut layer.ln1.gain, &mut layer.ln2.gain, &mut layer.ln1.bias, &mut layer.ln2.bias] {
        *t = tensor::add(t, &Tensor::randn(t.shape(), 0.3, &mut rng))?;
    }
    let x = Tensor::randn(&[4, 16], 1.0, &mut rng);
    let w = Tensor::randn(&[4, 16], 1.0, &mut rng);
    let cfg = GradCheckConfig {
        probes,
        seed,
        ..Default::default()
    };
    let structure = layer.clone();
    let report = check_gradients(&mut layer, &cfg, |tape, b| {
        let xv = tape.constant(x.clone());
        let y = enhanced_layer_on(tape, &structure, b, xv, None)?;
        let wv = tape.constant(w.clone());
        let weighted = tape.mul(y, wv)?;
        Ok(tape.sum(weighted))
    })?;
    let style = match norm {
        NormStyle::PostLn => "post_ln",
        NormStyle::PreLn => "pre_ln",
    };
    Ok(CheckResult::new(
        format!("layer_gradients[{style}]"),
        report.max_rel_err,
        GRAD_REL_TOL,
        report.coordinates_checked,
    ))
}

/// Check groups selectable by name.
pub const CHECK_GROUPS: [&str; 10] = [
    "monarch_oracle",
    "monarch_param_law",
    "surrogate_attention_oracle",
    "surrogate_ffn_oracle",
    "theorem_diagonal",
    "theorem_vertical",
    "expressiveness",
    "lti_decomposition",
    "lti_memoryless",
    "layer_gradients",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Seeds per randomized check.
    pub seeds: usize,
    pub base_seed: u64,
    /// Replaces every pinned threshold.
    pub threshold_override: Option<f64>,
    /// Groups to run; `None` runs all of them.
    pub selection: Option<Vec<String>>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seeds: 100,
            base_seed: 0,
            threshold_override: None,
            selection: None,
        }
    }
}

/// Runs the selected check groups in a fixed order.
pub fn run_all(cfg: &VerifyConfig) -> Result<Vec<CheckResult>> {
    if let Some(sel) = &cfg.selection {
        if let Some(bad) = sel.iter().find(|s| !CHECK_GROUPS.contains(&s.as_str())) {
            return config_err(format!("unknown check `{bad}`; known checks: {}", CHECK_GROUPS.join(", ")));
        }
    }
    let wanted = |g: &str| cfg.selection.as_ref().is_none_or(|s| s.iter().any(|x| x == g));
    let seeds = cfg.seeds;
    let base = cfg.base_seed;
    let mut out = Vec::new();

    if wanted("monarch_oracle") {
        out.push(check_monarch_oracle(&[4, 16, 64, 256], seeds, base)?);
    }
    if wanted("monarch_param_law") {
        out.push(check_param_law(&[1, 4, 9, 16, 64, 100, 256, 1024, 4096])?);
    }
    if wanted("surrogate_attention_oracle") {
        out.push(check_attention_oracle(&BLOCK_ORACLE_SIZES, seeds.min(50), base)?);
    }
    if wanted("surrogate_ffn_oracle") {
        out.push(check_ffn_oracle(&BLOCK_ORACLE_SIZES, seeds.min(50), base)?);
    }
    if wanted("theorem_diagonal") {
        for n in [8, 16, 64] {
            for lambda in [1, 3, 5] {
                for heads in [1, 2, 4] {
                    out.push(check_theorem_diagonal(TheoremCase::new(n, lambda, heads), seeds, base)?);
                }
            }
        }
    }
    if wanted("theorem_vertical") {
        for n in [8, 16, 64] {
            for lambda in [1, 2, 4] {
                for heads in [1, 2, 4] {
                    let (eq, rows) = check_theorem_vertical(TheoremCase::new(n, lambda, heads), seeds, base)?;
                    out.push(eq);
                    out.push(rows);
                }
            }
        }
    }
    if wanted("expressiveness") {
        for n in [4, 16] {
            for k in [1, n - 1] {
                for mode in [DependencyMode::ShortTerm, DependencyMode::LongTerm] {
                    let c = build_expressiveness(n, mode, k)?;
                    out.push(check_expressiveness(&c, seeds * 10, base)?);
                }
            }
        }
        let long = build_expressiveness(4, DependencyMode::LongTerm, 2)?;
        out.push(check_expressiveness(&long, seeds * 10, base)?);
    }
    if wanted("lti_decomposition") {
        out.push(check_lti_decomposition(16, 4, seeds, base)?);
    }
    if wanted("lti_memoryless") {
        out.push(check_lti_memoryless(16, 4, seeds, base)?);
    }
    if wanted("layer_gradients") {
        for norm in [NormStyle::PostLn, NormStyle::PreLn] {
            out.push(check_layer_gradients(norm, Some(50), base)?);
        }
    }

    if let Some(t) = cfg.threshold_override {
        out = out.into_iter().map(|r| r.with_threshold(t)).collect();
    }
    Ok(out)
}

//! Closed-form parameter and multiply-add accounting for the forecaster.
//!
//! Biases are omitted everywhere, matching the model. Layer-norm FLOPs are
//! not counted for either variant.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::structured::{exact_sqrt, pad_to_square};
use crate::surrogate::NormStyle;
use crate::tensor::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dense,
    Surrogate,
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Variant::Dense),
            "surrogate" => Ok(Variant::Surrogate),
            other => config_err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Input length `N`.
    pub seq_len: usize,
    /// Forecast horizon `L_out`.
    pub horizon: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Dense FFN width.
    pub d_ff: usize,
    pub layers: usize,
    pub norm: NormStyle,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::sine_toy()
    }
}

impl ModelConfig {
    /// Small univariate forecaster for the synthetic sine task.
    pub fn sine_toy() -> Self {
        Self {
            variant: Variant::Surrogate,
            seq_len: 48,
            horizon: 24,
            d_model: 16,
            heads: 2,
            d_ff: 64,
            layers: 1,
            norm: NormStyle::PostLn,
            activation: Activation::Gelu,
            seed: 0,
        }
    }

    /// Vanilla-Transformer-sized encoder: `D = 512`, `H = 8`, `N = 96`, two
    /// layers, `D_ff = 2048`.
    pub fn desk() -> Self {
        Self {
            variant: Variant::Dense,
            seq_len: 96,
            horizon: 24,
            d_model: 512,
            heads: 8,
            d_ff: 2048,
            layers: 2,
            norm: NormStyle::PostLn,
            activation: Activation::Gelu,
            seed: 0,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("seq_len", self.seq_len),
            ("horizon", self.horizon),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("layers", self.layers),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return config_err(format!("{name} must be positive"));
        }
        if self.d_model < 2 {
            return config_err("d_model must be at least 2 for layer normalization");
        }
        if self.d_model % self.heads != 0 {
            return config_err(format!(
                "D_model = {} is not divisible by H = {}",
                self.d_model, self.heads
            ));
        }
        Ok(())
    }

    /// Per-head width used by the model: `D/H` for dense, padded to a
    /// perfect square for surrogate.
    pub fn d_head(&self) -> usize {
        let w = self.d_model / self.heads;
        match self.variant {
            Variant::Dense => w,
            Variant::Surrogate => pad_to_square(w).n_pad,
        }
    }

    pub fn n_pad(&self) -> usize {
        pad_to_square(self.seq_len).n_pad
    }

    pub fn d_pad(&self) -> usize {
        pad_to_square(self.d_model).n_pad
    }
}

/// `n^{3/2}` for a perfect square `n`.
fn pow_three_halves(n: usize) -> usize {
    let b = exact_sqrt(n).expect("padded sizes are perfect squares");
    b * b * b
}

/// Parameter counts by role; `total` is their sum.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub embedding: usize,
    /// Query, key and value projections.
    pub projections: usize,
    /// Sequence-axis Monarchs (surrogate only).
    pub mixing: usize,
    pub output_projection: usize,
    pub ffn: usize,
    pub norms: usize,
    pub head: usize,
    pub total: usize,
}

pub fn count_params(c: &ModelConfig) -> Result<ParamCounts> {
    c.validate()?;
    let (d, h) = (c.d_model, c.heads);
    let dh = c.d_head();
    let per_layer = match c.variant {
        Variant::Dense => ParamCounts {
            projections: h * 3 * d * dh,
            output_projection: h * dh * d,
            ffn: 2 * d * c.d_ff,
            ..Default::default()
        },
        Variant::Surrogate => ParamCounts {
            projections: 3 * h * 2 * pow_three_halves(dh),
            mixing: 2 * 2 * pow_three_halves(c.n_pad()),
            output_projection: h * dh * d,
            ffn: 2 * 2 * pow_three_halves(c.d_pad()),
            ..Default::default()
        },
    };
    let l = c.layers;
    let mut out = ParamCounts {
        embedding: d,
        projections: l * per_layer.projections,
        mixing: l * per_layer.mixing,
        output_projection: l * per_layer.output_projection,
        ffn: l * per_layer.ffn,
        norms: l * 4 * d,
        head: c.seq_len * d * c.horizon,
        total: 0,
    };
    out.total = out.embedding + out.projections + out.mixing + out.output_projection + out.ffn + out.norms + out.head;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Embedding,
    /// Linear projections: queries, keys, values and the output projection.
    Lp,
    Attention,
    Ffn,
    Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopEntry {
    pub layer: Option<usize>,
    pub role: Role,
    pub op: String,
    pub mul_adds: u64,
    /// Executed by the Monarch kernels, and therefore seen by the meter.
    pub monarch: bool,
}

/// Multiply-add counts per operation; FLOPs are twice the multiply-adds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopLedger {
    pub entries: Vec<FlopEntry>,
}

impl FlopLedger {
    fn push(&mut self, layer: Option<usize>, role: Role, op: &str, mul_adds: u64, monarch: bool) {
        self.entries.push(FlopEntry {
            layer,
            role,
            op: op.to_string(),
            mul_adds,
            monarch,
        });
    }

    pub fn total_mul_adds(&self) -> u64 {
        self.entries.iter().map(|e| e.mul_adds).sum()
    }

    pub fn total_flops(&self) -> u64 {
        2 * self.total_mul_adds()
    }

    pub fn role_mul_adds(&self, role: Role) -> u64 {
        self.entries.iter().filter(|e| e.role == role).map(|e| e.mul_adds).sum()
    }

    /// FLOPs the Monarch meter should record for one forward pass.
    pub fn monarch_flops(&self) -> u64 {
        2 * self.entries.iter().filter(|e| e.monarch).map(|e| e.mul_adds).sum::<u64>()
    }
}

/// Multiply-adds of one order-2 Monarch applied to `d` vectors: `2·n^{3/2}·d`.
pub fn monarch_mul_adds(n: usize, d: usize) -> u64 {
    2 * (pow_three_halves(n) * d) as u64
}

/// Scores, weighted sum and a fixed 5 operations per softmax entry.
pub fn dense_attention_mul_adds(n: usize, d_k: usize, d_v: usize, heads: usize) -> u64 {
    let n2 = (n * n) as u64;
    heads as u64 * (n2 * d_k as u64 + n2 * d_v as u64 + 5 * n2)
}

pub fn count_flops(c: &ModelConfig) -> Result<FlopLedger> {
    c.validate()?;
    let (n, d, h) = (c.seq_len, c.d_model, c.heads);
    let dh = c.d_head();
    let mut ledger = FlopLedger::default();
    ledger.push(None, Role::Embedding, "embedding", (n * d) as u64, false);
    for l in 0..c.layers {
        let layer = Some(l);
        match c.variant {
            Variant::Dense => {
                ledger.push(layer, Role::Lp, "qkv_projection", (3 * h * n * d * dh) as u64, false);
                ledger.push(layer, Role::Attention, "softmax_attention", dense_attention_mul_adds(n, dh, dh, h), false);
                ledger.push(layer, Role::Lp, "output_projection", (n * h * dh * d) as u64, false);
                ledger.push(layer, Role::Ffn, "dense_ffn", (2 * n * d * c.d_ff) as u64, false);
            }
            Variant::Surrogate => {
                let n_pad = c.n_pad();
                ledger.push(layer, Role::Lp, "qkv_projection", 3 * h as u64 * monarch_mul_adds(dh, n), true);
                ledger.push(layer, Role::Attention, "sequence_monarchs", 2 * h as u64 * monarch_mul_adds(n_pad, dh), true);
                ledger.push(layer, Role::Attention, "hadamard", (2 * h * n_pad * dh) as u64, false);
                ledger.push(layer, Role::Lp, "output_projection", (h * n * dh * d) as u64, false);
                ledger.push(layer, Role::Ffn, "monarch_ffn", 2 * monarch_mul_adds(c.d_pad(), n), true);
            }
        }
    }
    ledger.push(None, Role::Head, "head", (n * d * c.horizon) as u64, false);
    Ok(ledger)
}

/// Surrogate-over-dense totals for the same configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRatios {
    pub dense_params: usize,
    pub surrogate_params: usize,
    pub param_ratio: f64,
    pub dense_flops: u64,
    pub surrogate_flops: u64,
    pub flop_ratio: f64,
}

pub fn efficiency_ratios(c: &ModelConfig) -> Result<EfficiencyRatios> {
    let dense = c.with_variant(Variant::Dense);
    let surrogate = c.with_variant(Variant::Surrogate);
    let dense_params = count_params(&dense)?.total;
    let surrogate_params = count_params(&surrogate)?.total;
    let dense_flops = count_flops(&dense)?.total_flops();
    let surrogate_flops = count_flops(&surrogate)?.total_flops();
    Ok(EfficiencyRatios {
        dense_params,
        surrogate_params,
        param_ratio: surrogate_params as f64 / dense_params as f64,
        dense_flops,
        surrogate_flops,
        flop_ratio: surrogate_flops as f64 / dense_flops as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structured::monarch_apply_flops;

    #[test]
    fn formula_examples() {
        assert_eq!(2 * monarch_mul_adds(16, 1) / 2, 2 * 64);
        // surrogate FFN at D_pad = 16
        let c = ModelConfig {
            d_model: 16,
            heads: 1,
            layers: 1,
            ..ModelConfig::sine_toy()
        };
        assert_eq!(count_params(&c).unwrap().ffn, 256);
        let dense = c.with_variant(Variant::Dense);
        assert_eq!(count_params(&dense).unwrap().ffn, 2048);
    }

    #[test]
    fn projection_reduction_is_two_over_sqrt_d() {
        let d = 256;
        let ratio = (2 * pow_three_halves(d)) as f64 / (d * d) as f64;
        assert_eq!(ratio, 0.125);
    }

    #[test]
    fn dense_scores_and_quadratic_growth() {
        let n = 64;
        let d = 16;
        assert_eq!((n * n * d) as u64, 65_536);
        let a = dense_attention_mul_adds(n, d, d, 1);
        assert_eq!(dense_attention_mul_adds(2 * n, d, d, 1), 4 * a);
    }

    #[test]
    fn monarch_counts_agree_with_the_meter_formula() {
        for n in [4, 16, 64, 256, 1024] {
            assert_eq!(2 * monarch_mul_adds(n, 3), monarch_apply_flops(n, 3).unwrap());
        }
        assert_eq!(2 * monarch_mul_adds(256, 1), 16_384);
    }

    #[test]
    fn totals_are_sums_of_parts() {
        for v in [Variant::Dense, Variant::Surrogate] {
            let c = ModelConfig::desk().with_variant(v);
            let p = count_params(&c).unwrap();
            assert_eq!(
                p.total,
                p.embedding + p.projections + p.mixing + p.output_projection + p.ffn + p.norms + p.head
            );
            let f = count_flops(&c).unwrap();
            let by_role: u64 = [Role::Embedding, Role::Lp, Role::Attention, Role::Ffn, Role::Head]
                .into_iter()
                .map(|r| f.role_mul_adds(r))
                .sum();
            assert_eq!(by_role, f.total_mul_adds());
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = ModelConfig {
            heads: 3,
            ..ModelConfig::sine_toy()
        };
        assert!(count_params(&c).is_err());
        let c = ModelConfig {
            layers: 0,
            ..ModelConfig::sine_toy()
        };
        assert!(count_flops(&c).is_err());
        let c = ModelConfig {
            d_model: 1,
            heads: 1,
            ..ModelConfig::sine_toy()
        };
        assert!(c.validate().is_err());
    }
}

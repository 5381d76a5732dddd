//! Univariate forecaster and the Adam optimizer.
//!
//! `x (N×1) → x·W_embed (N×D) → encoder layers → flatten (1×N·D) → ·W_head
//! (1×L_out)`.

use rand::Rng;

use super::accounting::{ModelConfig, Variant};
use crate::autograd::{Parameterized, Tape, Var};
use crate::error::Result;
use crate::reference::{dense_layer_on, DenseLayerParams, DenseLayerVars};
use crate::surrogate::{enhanced_layer_on, BlockInit, Dropout, EnhancedLayerParams, EnhancedLayerVars};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum EncoderLayer {
    Dense(DenseLayerParams),
    Surrogate(EnhancedLayerParams),
}

#[derive(Clone, Debug)]
pub enum EncoderLayerVars {
    Dense(DenseLayerVars),
    Surrogate(EnhancedLayerVars),
}

impl Parameterized for EncoderLayer {
    type Bound = EncoderLayerVars;

    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Self::Dense(p) => p.tensors(),
            Self::Surrogate(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Self::Dense(p) => p.tensors_mut(),
            Self::Surrogate(p) => p.tensors_mut(),
        }
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> EncoderLayerVars {
        match self {
            Self::Dense(p) => EncoderLayerVars::Dense(p.attach(vars)),
            Self::Surrogate(p) => EncoderLayerVars::Surrogate(p.attach(vars)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Forecaster {
    pub config: ModelConfig,
    /// `1 × D`
    pub embed: Tensor,
    pub layers: Vec<EncoderLayer>,
    /// `(N·D) × L_out`
    pub head: Tensor,
}

#[derive(Clone, Debug)]
pub struct ForecasterVars {
    pub embed: Var,
    pub layers: Vec<EncoderLayerVars>,
    pub head: Var,
}

impl Forecaster {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (n, d) = (config.seq_len, config.d_model);
        let embed = Tensor::randn(&[1, d], 1.0, rng);
        let layers = (0..config.layers)
            .map(|_| -> Result<EncoderLayer> {
                Ok(match config.variant {
                    Variant::Dense => EncoderLayer::Dense(DenseLayerParams::new(
                        d,
                        config.heads,
                        config.d_ff,
                        config.norm,
                        config.activation,
                        rng,
                    )?),
                    Variant::Surrogate => EncoderLayer::Surrogate(EnhancedLayerParams::new(
                        n,
                        d,
                        config.heads,
                        config.norm,
                        config.activation,
                        BlockInit::Random,
                        rng,
                    )?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Tensor::randn(&[n * d, config.horizon], (1.0 / (n * d) as f64).sqrt(), rng);
        Ok(Self {
            config: config.clone(),
            embed,
            layers,
            head,
        })
    }

    /// Prediction for one window, `1 × L_out`.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        b: &ForecasterVars,
        x: Var,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        let mut h = tape.matmul(x, b.embed)?;
        for (layer, vars) in self.layers.iter().zip(&b.layers) {
            h = match (layer, vars) {
                (EncoderLayer::Dense(p), EncoderLayerVars::Dense(v)) => {
                    dense_layer_on(tape, p, v, h, dropout.as_deref_mut())?
                }
                (EncoderLayer::Surrogate(p), EncoderLayerVars::Surrogate(v)) => {
                    enhanced_layer_on(tape, p, v, h, dropout.as_deref_mut())?
                }
                _ => unreachable!("variables are attached from the same layer list"),
            };
        }
        let flat = tape.reshape(h, &[1, self.config.seq_len * self.config.d_model])?;
        tape.matmul(flat, b.head)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (b, _) = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = self.forward_on(&mut tape, &b, xv, None)?;
        Ok(tape.value(y).clone())
    }
}

impl Parameterized for Forecaster {
    type Bound = ForecasterVars;

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.push(&self.head);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.push(&mut self.head);
        out
    }

    fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> ForecasterVars {
        let embed = vars.next().expect("embedding");
        let layers = self.layers.iter().map(|l| l.attach(vars)).collect();
        let head = vars.next().expect("head");
        ForecasterVars { embed, layers, head }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let moments = m.data_mut().iter_mut().zip(v.data_mut());
            for ((pi, &gi), (mi, vi)) in p.data_mut().iter_mut().zip(g.data()).zip(moments) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *pi -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::accounting::count_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for variant in [Variant::Dense, Variant::Surrogate] {
            for (seq_len, d_model, heads) in [(48, 16, 2), (16, 8, 2), (10, 12, 3)] {
                let c = ModelConfig {
                    variant,
                    seq_len,
                    d_model,
                    heads,
                    layers: 2,
                    ..ModelConfig::sine_toy()
                };
                let m = Forecaster::new(&c, &mut rng).unwrap();
                assert_eq!(m.param_count(), count_params(&c).unwrap().total, "{c:?}");
            }
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = Tensor::from_vec(vec![3.0, -2.0]).unwrap();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = x.scale(2.0);
            opt.step(vec![&mut x], &[g]);
        }
        assert!(x.max_abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn prediction_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = ModelConfig::sine_toy();
        let m = Forecaster::new(&c, &mut rng).unwrap();
        let y = m.predict(&Tensor::zeros(&[48, 1])).unwrap();
        assert_eq!(y.shape(), &[1, 24]);
    }
}

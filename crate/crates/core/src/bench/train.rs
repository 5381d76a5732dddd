//! Training loop for the synthetic forecasting task.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accounting::{ModelConfig, Variant};
use super::data::{generate_sine, SineDatasetSpec, Window};
use super::model::{Adam, Forecaster};
use crate::autograd::{Parameterized, Tape};
use crate::error::{config_err, Result};
use crate::surrogate::Dropout;
use crate::tensor::Tensor;
use crate::verification::f64_or_nan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Applied to every residual sub-layer output during training.
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            batch: 32,
            dropout: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    #[serde(deserialize_with = "f64_or_nan")]
    pub train_loss: f64,
    #[serde(deserialize_with = "f64_or_nan")]
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub variant: Variant,
    pub params: usize,
    /// Epoch 0 holds the losses before any update.
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    #[serde(deserialize_with = "f64_or_nan")]
    pub best_val_loss: f64,
    #[serde(deserialize_with = "f64_or_nan")]
    pub test_mse: f64,
    #[serde(deserialize_with = "f64_or_nan")]
    pub test_mae: f64,
    pub failed: bool,
    pub failure: Option<String>,
    pub seconds: f64,
}

/// Mean squared and mean absolute error over every target entry.
pub fn evaluate(model: &Forecaster, windows: &[Window]) -> Result<(f64, f64)> {
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut count = 0usize;
    for w in windows {
        let y = model.predict(&w.input)?;
        for (p, t) in y.data().iter().zip(w.target.data()) {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
        }
        count += w.target.len();
    }
    if count == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok((se / count as f64, ae / count as f64))
}

fn batch_step(
    model: &mut Forecaster,
    opt: &mut Adam,
    batch: &[&Window],
    dropout: &mut Dropout,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (b, vars) = model.bind(&mut tape, true);
    let mut total = None;
    for w in batch {
        let x = tape.constant(w.input.clone());
        let t = tape.constant(w.target.clone());
        let y = model.forward_on(&mut tape, &b, x, Some(dropout))?;
        let l = tape.mse(y, t)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
    }
    let total = total.expect("non-empty batch");
    let loss = tape.scale(total, 1.0 / batch.len() as f64);
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Ok(value);
    }
    let mut grads = tape.backward(loss)?;
    let shapes: Vec<Vec<usize>> = model.tensors().iter().map(|t| t.shape().to_vec()).collect();
    let g: Vec<Tensor> = vars
        .iter()
        .zip(&shapes)
        .map(|(v, s)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(s)))
        .collect();
    opt.step(model.tensors_mut(), &g);
    Ok(value)
}

/// Trains on the train split, keeps the parameters of the best validation
/// epoch and reports test MSE/MAE for them.
pub fn train(config: &ModelConfig, data: &SineDatasetSpec, tc: &TrainConfig) -> Result<TrainingReport> {
    if config.seq_len != data.input_len || config.horizon != data.horizon {
        return config_err(format!(
            "model expects windows of {}→{}, dataset provides {}→{}",
            config.seq_len, config.horizon, data.input_len, data.horizon
        ));
    }
    if tc.batch == 0 {
        return config_err("batch size must be positive");
    }
    if !(0.0..1.0).contains(&tc.dropout) {
        return config_err(format!("dropout must lie in [0, 1), got {}", tc.dropout));
    }
    let start = Instant::now();
    let ds = generate_sine(data)?;
    let train_set = ds.windows(ds.train);
    let val_set = ds.windows(ds.val);
    let test_set = ds.windows(ds.test);

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(config.seed);
    drop_rng.set_stream(2);
    let mut dropout = Dropout::new(tc.dropout, drop_rng);

    let mut model = Forecaster::new(config, &mut init_rng)?;
    let mut opt = Adam::new(tc.lr);

    let (train0, _) = evaluate(&model, &train_set)?;
    let (val0, _) = evaluate(&model, &val_set)?;
    let mut curve = vec![EpochStats {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
    }];
    let mut best = (0, val0, model.clone());
    let mut failure = None;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    'epochs: for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for chunk in order.chunks(tc.batch) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &train_set[i]).collect();
            let loss = batch_step(&mut model, &mut opt, &batch, &mut dropout)?;
            if !loss.is_finite() {
                failure = Some(format!("training loss became {loss} in epoch {epoch}"));
                break 'epochs;
            }
            sum += loss * batch.len() as f64;
        }
        let (val_loss, _) = evaluate(&model, &val_set)?;
        curve.push(EpochStats {
            epoch,
            train_loss: sum / train_set.len() as f64,
            val_loss,
        });
        if !val_loss.is_finite() {
            failure = Some(format!("validation loss became {val_loss} in epoch {epoch}"));
            break;
        }
        if val_loss < best.1 {
            best = (epoch, val_loss, model.clone());
        }
    }

    let (best_epoch, best_val_loss, best_model) = best;
    let (test_mse, test_mae) = evaluate(&best_model, &test_set)?;
    Ok(TrainingReport {
        variant: config.variant,
        params: best_model.param_count(),
        curve,
        best_epoch,
        best_val_loss,
        test_mse,
        test_mae,
        failed: failure.is_some() || !test_mse.is_finite(),
        failure,
        seconds: start.elapsed().as_secs_f64(),
    })
}

//! Synthetic sine series, chronological 6:2:2 splits and sliding windows.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SineDatasetSpec {
    /// Period in steps.
    pub period: f64,
    pub amplitude: f64,
    pub samples: usize,
    pub input_len: usize,
    pub horizon: usize,
}

impl Default for SineDatasetSpec {
    fn default() -> Self {
        Self {
            period: 24.0,
            amplitude: 1.0,
            samples: 1000,
            input_len: 48,
            horizon: 24,
        }
    }
}

/// Half-open range `[start, end)` of series indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub start: usize,
    pub end: usize,
}

impl Split {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug)]
pub struct Window {
    /// `L_in × 1`
    pub input: Tensor,
    /// `1 × L_out`
    pub target: Tensor,
}

#[derive(Clone, Debug)]
pub struct SineDataset {
    pub series: Vec<f64>,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub input_len: usize,
    pub horizon: usize,
}

pub fn sine_series(period: f64, amplitude: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|t| amplitude * (2.0 * PI * t as f64 / period).sin())
        .collect()
}

pub fn generate_sine(spec: &SineDatasetSpec) -> Result<SineDataset> {
    if !(spec.period > 0.0) {
        return config_err(format!("period must be positive, got {}", spec.period));
    }
    if spec.input_len == 0 || spec.horizon == 0 {
        return config_err("input length and horizon must be positive");
    }
    let window = spec.input_len + spec.horizon;
    if spec.samples < window {
        return config_err(format!(
            "{} samples cannot hold one window of {window}",
            spec.samples
        ));
    }
    let n = spec.samples;
    let a = n * 6 / 10;
    let b = n * 8 / 10;
    let ds = SineDataset {
        series: sine_series(spec.period, spec.amplitude, n),
        train: Split { start: 0, end: a },
        val: Split { start: a, end: b },
        test: Split { start: b, end: n },
        input_len: spec.input_len,
        horizon: spec.horizon,
    };
    for (name, s) in [("train", ds.train), ("validation", ds.val), ("test", ds.test)] {
        if s.len() < window {
            return config_err(format!(
                "{name} split has {} samples, fewer than one window of {window}",
                s.len()
            ));
        }
    }
    Ok(ds)
}

impl SineDataset {
    pub fn window_count(&self, split: Split) -> usize {
        (split.len() + 1).saturating_sub(self.input_len + self.horizon)
    }

    /// Stride-1 windows lying entirely inside `split`.
    pub fn windows(&self, split: Split) -> Vec<Window> {
        let (li, lo) = (self.input_len, self.horizon);
        (0..self.window_count(split))
            .map(|i| {
                let s = split.start + i;
                let input = self.series[s..s + li].to_vec();
                let target = self.series[s + li..s + li + lo].to_vec();
                Window {
                    input: Tensor::new(vec![li, 1], input).expect("window shape"),
                    target: Tensor::new(vec![1, lo], target).expect("window shape"),
                }
            })
            .collect()
    }

    /// Writes the series as CSV with header `t,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["t", "value"])?;
        for (t, v) in self.series.iter().enumerate() {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

//! Log-log scaling fits over analytic counts and wall-clock timings.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accounting::{dense_attention_mul_adds, monarch_mul_adds};
use crate::error::{Error, Result};
use crate::structured::{MonarchMatrix, Side};
use crate::tensor::Tensor;

/// Least-squares slope of `ln(measurement)` against `ln(size)`.
pub fn fit_scaling_exponent(sizes: &[f64], measurements: &[f64]) -> Result<f64> {
    if sizes.len() != measurements.len() {
        return Err(Error::Numeric(format!(
            "{} sizes but {} measurements",
            sizes.len(),
            measurements.len()
        )));
    }
    if sizes.len() < 3 {
        return Err(Error::Numeric(format!("need at least 3 points, got {}", sizes.len())));
    }
    if let Some(bad) = sizes.iter().chain(measurements).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Numeric(format!("log-log fit needs positive finite values, got {bad}")));
    }
    let xs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = measurements.iter().map(|m| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Numeric("all sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

fn as_f64(v: &[usize]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Slope of the Monarch multiply-add count in `n` for fixed `d`.
pub fn analytic_monarch_slope(sizes: &[usize], d: usize) -> Result<f64> {
    let counts: Vec<f64> = sizes.iter().map(|&n| monarch_mul_adds(n, d) as f64).collect();
    fit_scaling_exponent(&as_f64(sizes), &counts)
}

/// Slope of the dense attention multiply-add count in `n` for fixed width.
pub fn analytic_dense_slope(sizes: &[usize], d: usize) -> Result<f64> {
    let counts: Vec<f64> = sizes.iter().map(|&n| dense_attention_mul_adds(n, d, d, 1) as f64).collect();
    fit_scaling_exponent(&as_f64(sizes), &counts)
}

/// Minimum wall time of one timing sample.
const SAMPLE_FLOOR: Duration = Duration::from_millis(10);

/// Per-call times of `m·X` with `X` of shape `n × d` for every `n`.
///
/// Each sample loops until it spans at least 10 ms. Sizes are visited
/// round-robin for `rounds` rounds and the fastest sample per size is kept,
/// so a transient slowdown hits all sizes alike.
pub fn time_monarch_sweep(sizes: &[usize], d: usize, rounds: usize, seed: u64) -> Result<Vec<Duration>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let m = MonarchMatrix::random(n, &mut rng)?;
        let x = Tensor::randn(&[n, d], 1.0, &mut rng);
        let warm = Instant::now();
        std::hint::black_box(m.apply(&x, Side::Left)?);
        let once = warm.elapsed().max(Duration::from_nanos(1));
        let iters = (SAMPLE_FLOOR.as_nanos() / once.as_nanos()).max(1) as u32;
        cases.push((m, x, iters));
    }
    let mut best = vec![Duration::MAX; sizes.len()];
    for _ in 0..rounds.max(1) {
        for ((m, x, iters), slot) in cases.iter().zip(&mut best) {
            let start = Instant::now();
            for _ in 0..*iters {
                std::hint::black_box(m.apply(std::hint::black_box(x), Side::Left)?);
            }
            *slot = (*slot).min(start.elapsed() / *iters);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallClockPoint {
    pub n: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub sizes: Vec<usize>,
    pub monarch_slope: f64,
    pub dense_slope: f64,
    pub wall_clock: Vec<WallClockPoint>,
    pub wall_clock_slope: Option<f64>,
}

/// Sizes for the wall-clock fit.
pub const WALL_CLOCK_SIZES: [usize; 5] = [1024, 2304, 4096, 9216, 16384];
pub const WALL_CLOCK_WIDTH: usize = 16;

/// Analytic slopes on `sizes`, plus an optional timed sweep on `timed`.
pub fn scaling_report(sizes: &[usize], timed: Option<&[usize]>, rounds: usize, seed: u64) -> Result<ScalingReport> {
    let monarch_slope = analytic_monarch_slope(sizes, 1)?;
    let dense_slope = analytic_dense_slope(sizes, 16)?;
    let mut wall_clock = Vec::new();
    let mut wall_clock_slope = None;
    if let Some(timed) = timed {
        let times = time_monarch_sweep(timed, WALL_CLOCK_WIDTH, rounds, seed)?;
        for (&n, t) in timed.iter().zip(times) {
            wall_clock.push(WallClockPoint {
                n,
                seconds: t.as_secs_f64(),
            });
        }
        let secs: Vec<f64> = wall_clock.iter().map(|p| p.seconds).collect();
        wall_clock_slope = Some(fit_scaling_exponent(&as_f64(timed), &secs)?);
    }
    Ok(ScalingReport {
        sizes: sizes.to_vec(),
        monarch_slope,
        dense_slope,
        wall_clock,
        wall_clock_slope,
    })
}

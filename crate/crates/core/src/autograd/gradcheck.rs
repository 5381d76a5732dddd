//! Central finite-difference oracle for tape gradients.
//!
//! The oracle only ever calls the forward pass, so it stays independent of
//! every backward rule it checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Parameterized, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the element-wise relative error.
    pub rel_tol: f64,
    /// Denominator floor: `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
    /// Check only this many randomly chosen coordinates; `None` checks all.
    pub probes: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            floor: 1e-8,
            probes: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(parameter index, flat coordinate)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub coordinates_checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central-difference gradient of a scalar function of one tensor.
pub fn numeric_gradient(x: &Tensor, step: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Compares tape gradients of `loss` against central differences for every
/// parameter of `params` (or a random sample of coordinates).
pub fn check_gradients<P, F>(params: &mut P, cfg: &GradCheckConfig, loss: F) -> Result<GradCheckReport>
where
    P: Parameterized,
    F: Fn(&mut Tape, &P::Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let (bound, vars) = params.bind(&mut tape, true);
    let out = loss(&mut tape, &bound)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params.tensors())
        .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    drop(tape);

    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut coords: Vec<(usize, usize)> = Vec::with_capacity(total);
    for (p, &len) in sizes.iter().enumerate() {
        coords.extend((0..len).map(|i| (p, i)));
    }
    if let Some(k) = cfg.probes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let picked = sample(&mut rng, total, k.min(total)).into_vec();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let eval = |params: &P| -> Result<f64> {
        let mut tape = Tape::new();
        let (bound, _) = params.bind(&mut tape, false);
        let out = loss(&mut tape, &bound)?;
        tape.value(out).item()
    };

    let mut max_rel_err = 0.0_f64;
    let mut worst = None;
    for &(p, i) in &coords {
        let orig = params.tensors()[p].data()[i];
        params.tensors_mut()[p].data_mut()[i] = orig + cfg.step;
        let up = eval(params)?;
        params.tensors_mut()[p].data_mut()[i] = orig - cfg.step;
        let down = eval(params)?;
        params.tensors_mut()[p].data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * cfg.step);
        let err = relative_error(analytic[p].data()[i], numeric, cfg.floor);
        if err > max_rel_err || worst.is_none() {
            max_rel_err = max_rel_err.max(err);
            worst = Some((p, i));
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst,
        coordinates_checked: coords.len(),
        passed: max_rel_err <= cfg.rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Activation;

    struct Pair {
        a: Tensor,
        b: Tensor,
    }

    impl Parameterized for Pair {
        type Bound = (Var, Var);

        fn tensors(&self) -> Vec<&Tensor> {
            vec![&self.a, &self.b]
        }

        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.a, &mut self.b]
        }

        fn attach(&self, vars: &mut dyn Iterator<Item = Var>) -> (Var, Var) {
            (vars.next().unwrap(), vars.next().unwrap())
        }
    }

    fn pair(seed: u64, a: &[usize], b: &[usize]) -> Pair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Pair {
            a: Tensor::randn(a, 1.0, &mut rng),
            b: Tensor::randn(b, 1.0, &mut rng),
        }
    }

    /// Random fixed weights so no gradient is structurally symmetric.
    fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let w = Tensor::randn(tape.value(y).shape(), 1.0, &mut rng);
        let w = tape.constant(w);
        let p = tape.mul(y, w)?;
        Ok(tape.sum(p))
    }

    #[test]
    fn numeric_gradient_of_square() {
        let x = Tensor::from_vec(vec![1.0, -3.0]).unwrap();
        let g = numeric_gradient(&x, 1e-6, |t| t.data().iter().map(|v| v * v).sum());
        assert!((g.data()[0] - 2.0).abs() < 1e-8 && (g.data()[1] + 6.0).abs() < 1e-8);
    }

    #[test]
    fn primitives_match_finite_differences_over_seeds() {
        let cfg = GradCheckConfig::default();
        for seed in 0..50 {
            let mut p = pair(seed, &[3, 4], &[4, 2]);
            let r = check_gradients(&mut p, &cfg, |t, &(a, b)| {
                let y = t.matmul(a, b)?;
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.passed, "matmul seed {seed}: {r:?}");

            let mut p = pair(seed, &[3, 3], &[3, 3]);
            let r = check_gradients(&mut p, &cfg, |t, &(a, b)| {
                let y = t.mul(a, b)?;
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.passed, "mul seed {seed}: {r:?}");

            let mut p = pair(seed, &[3, 5], &[5]);
            let r = check_gradients(&mut p, &cfg, |t, &(a, _)| {
                let y = t.softmax_rows(a)?;
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.passed, "softmax seed {seed}: {r:?}");

            let mut p = pair(seed, &[3, 5], &[5]);
            let r = check_gradients(&mut p, &cfg, |t, &(a, g)| {
                let bias = t.constant(Tensor::zeros(&[5]));
                let y = t.layer_norm(a, g, bias)?;
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.passed, "layer_norm seed {seed}: {r:?}");

            let mut p = pair(seed, &[4, 3], &[3]);
            let r = check_gradients(&mut p, &cfg, |t, &(a, _)| {
                let y = t.activation(a, Activation::Gelu);
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.passed, "gelu seed {seed}: {r:?}");
        }
    }

    #[test]
    fn layer_norm_gain_and_bias_gradients() {
        let cfg = GradCheckConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::randn(&[4, 6], 1.0, &mut rng);
        let mut p = pair(9, &[6], &[6]);
        let r = check_gradients(&mut p, &cfg, |t, &(g, b)| {
            let xv = t.constant(x.clone());
            let y = t.layer_norm(xv, g, b)?;
            weighted_sum(t, y, 9)
        })
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.coordinates_checked, 12);
    }

    #[test]
    fn probe_sampling_limits_coordinates() {
        let cfg = GradCheckConfig {
            probes: Some(5),
            ..Default::default()
        };
        let mut p = pair(1, &[4, 4], &[4, 4]);
        let r = check_gradients(&mut p, &cfg, |t, &(a, b)| {
            let y = t.matmul(a, b)?;
            weighted_sum(t, y, 1)
        })
        .unwrap();
        assert_eq!(r.coordinates_checked, 5);
        assert!(r.passed);
    }
}

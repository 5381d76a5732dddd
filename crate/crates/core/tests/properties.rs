//! Property tests over random shapes, seeds and inputs.

use msb::autograd::{Parameterized, Tape};
use msb::bench::accounting::{count_flops, count_params, ModelConfig, Variant};
use msb::bench::data::{generate_sine, SineDatasetSpec};
use msb::bench::model::Forecaster;
use msb::reference::{pattern_matrix, sum_of_convs_forward, AttentionPattern, ConvKernel};
use msb::structured::{meter, monarch_apply_flops, BlockDiagonal, MonarchMatrix, PermutationSpec, Side};
use msb::surrogate::{enhanced_layer_on, sequence_mixing, BlockInit, EnhancedLayerParams, NormStyle};
use msb::tensor::{self, softmax_rows};
use msb::{Activation, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows of `x` rotated down by `s`: row `q` of the result is row `q − s`.
fn rotate_rows(x: &Tensor, s: usize) -> Tensor {
    let n = x.rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|q| x.row((q + n - s % n) % n).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

/// Gradients of a weighted output sum with respect to every layer tensor.
fn layer_gradients(layer: &EnhancedLayerParams, x: &Tensor, w: &Tensor) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let (b, vars) = layer.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let y = enhanced_layer_on(&mut tape, layer, &b, xv, None).unwrap();
    let wv = tape.constant(w.clone());
    let weighted = tape.mul(y, wv).unwrap();
    let loss = tape.sum(weighted);
    let grads = tape.backward(loss).unwrap();
    vars.iter()
        .zip(layer.tensors())
        .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn base_sqrt_permutation_is_an_involution(b in 1usize..=32) {
        let p = PermutationSpec::new(b * b).unwrap();
        for i in 0..b * b {
            prop_assert_eq!(p.apply(p.apply(i)), i);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..12, seed in any::<u64>(), spread in 0.1f64..80.0) {
        let a = Tensor::uniform(&[rows, cols], -spread, spread, &mut rng(seed));
        let s = softmax_rows(&a).unwrap();
        for r in 0..rows {
            let sum: f64 = s.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "row {} sums to {}", r, sum);
            prop_assert!(s.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn block_diagonal_is_zero_off_its_blocks(b in 1usize..8, seed in any::<u64>()) {
        let f = BlockDiagonal::kaiming(b, &mut rng(seed));
        let dense = f.to_dense();
        for r in 0..b * b {
            for c in 0..b * b {
                if r / b != c / b {
                    prop_assert_eq!(dense.at(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn factored_apply_matches_dense(b in 1usize..=16, d in 1usize..5, seed in any::<u64>()) {
        let n = b * b;
        let mut g = rng(seed);
        let m = MonarchMatrix::random(n, &mut g).unwrap();
        let x = Tensor::randn(&[n, d], 1.0, &mut g);
        let fast = m.apply(&x, Side::Left).unwrap();
        let slow = tensor::matmul(&m.to_dense(), &x).unwrap();
        prop_assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-10);
    }

    #[test]
    fn meter_matches_flop_formula(b in 1usize..=24, d in 1usize..6, seed in any::<u64>()) {
        let n = b * b;
        let mut g = rng(seed);
        let m = MonarchMatrix::random(n, &mut g).unwrap();
        let x = Tensor::randn(&[n, d], 1.0, &mut g);
        let (_, left) = meter::measure(|| m.apply(&x, Side::Left).unwrap());
        let xt = x.transpose().unwrap();
        let (_, right) = meter::measure(|| m.apply(&xt, Side::Right).unwrap());
        let expected = monarch_apply_flops(n, d).unwrap();
        prop_assert_eq!(left, expected);
        prop_assert_eq!(right, expected);
    }

    #[test]
    fn diagonal_patterns_are_row_stochastic(n in 1usize..40, half in 0usize..4, seed in any::<u64>()) {
        let lambda = (2 * half + 1).min(if n % 2 == 1 { n } else { n - 1 }).max(1);
        let p = AttentionPattern::random_diagonal(n, lambda, &mut rng(seed)).unwrap();
        let a = pattern_matrix(&p);
        for r in 0..n {
            prop_assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(a.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn vertical_patterns_are_row_stochastic(n in 1usize..40, lambda in 1usize..6, seed in any::<u64>()) {
        let p = AttentionPattern::random_vertical(n, lambda.min(n), &mut rng(seed)).unwrap();
        let a = pattern_matrix(&p);
        for r in 0..n {
            prop_assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(a.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn sum_of_convs_commutes_with_rotation(n in 3usize..24, half in 0usize..3, heads in 1usize..4, s in 0usize..24, seed in any::<u64>()) {
        let lambda = (2 * half + 1).min(if n % 2 == 1 { n } else { n - 1 });
        let mut g = rng(seed);
        let kernels: Vec<ConvKernel> = (0..heads)
            .map(|_| {
                let p = AttentionPattern::random_diagonal(n, lambda, &mut g).unwrap();
                ConvKernel::from_pattern(&p, &Tensor::randn(&[3, 2], 1.0, &mut g))
            })
            .collect();
        let x = Tensor::randn(&[n, 3], 1.0, &mut g);
        let rotated_out = sum_of_convs_forward(&rotate_rows(&x, s), &kernels).unwrap();
        let out_rotated = rotate_rows(&sum_of_convs_forward(&x, &kernels).unwrap(), s);
        prop_assert_eq!(rotated_out.data(), out_rotated.data());
    }

    #[test]
    fn sequence_mixing_is_linear_in_values(b in 1usize..6, d in 1usize..5, k in -6i32..6, seed in any::<u64>()) {
        let n = b * b;
        let mut g = rng(seed);
        let m1 = MonarchMatrix::random(n, &mut g).unwrap();
        let m2 = MonarchMatrix::random(n, &mut g).unwrap();
        let q = Tensor::randn(&[n, d], 1.0, &mut g);
        let kk = Tensor::randn(&[n, d], 1.0, &mut g);
        let v = Tensor::randn(&[n, d], 1.0, &mut g);
        let alpha = 2f64.powi(k);
        let base = sequence_mixing(&m1, &m2, &q, &kk, &v).unwrap();
        let scaled = sequence_mixing(&m1, &m2, &q, &kk, &v.scale(alpha)).unwrap();
        let expected = base.scale(alpha);
        prop_assert_eq!(scaled.data(), expected.data());
        let beta = 0.37;
        let general = sequence_mixing(&m1, &m2, &q, &kk, &v.scale(beta)).unwrap();
        prop_assert!(general.max_abs_diff(&base.scale(beta)).unwrap() <= 1e-12 * (1.0 + base.max_abs()));
    }

    #[test]
    fn splits_are_disjoint_and_chronological(
        samples in 80usize..400,
        input_len in 1usize..8,
        horizon in 1usize..8,
        period in 2.0f64..50.0,
    ) {
        let spec = SineDatasetSpec { period, samples, input_len, horizon, ..Default::default() };
        let ds = generate_sine(&spec).unwrap();
        prop_assert_eq!(ds.train.start, 0);
        prop_assert!(ds.train.end <= ds.val.start);
        prop_assert!(ds.val.end <= ds.test.start);
        prop_assert_eq!(ds.test.end, samples);
        for split in [ds.train, ds.val, ds.test] {
            for w in ds.windows(split) {
                prop_assert_eq!(w.input.len(), input_len);
                prop_assert_eq!(w.target.len(), horizon);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn meter_matches_ledger_for_surrogate_forward(
        seq_len in 2usize..20,
        head_width in 1usize..5,
        heads in 1usize..4,
        layers in 1usize..3,
        horizon in 1usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(head_width * heads >= 2);
        let c = ModelConfig {
            variant: Variant::Surrogate,
            seq_len,
            horizon,
            d_model: head_width * heads,
            heads,
            layers,
            ..ModelConfig::sine_toy()
        };
        let model = Forecaster::new(&c, &mut rng(seed)).unwrap();
        let x = Tensor::randn(&[seq_len, 1], 1.0, &mut rng(seed ^ 1));
        let (_, flops) = meter::measure(|| model.predict(&x).unwrap());
        prop_assert_eq!(flops, count_flops(&c).unwrap().monarch_flops());
    }

    #[test]
    fn stored_parameters_match_accounting(
        seq_len in 1usize..30,
        head_width in 1usize..6,
        heads in 1usize..4,
        variant in prop_oneof![Just(Variant::Dense), Just(Variant::Surrogate)],
    ) {
        prop_assume!(head_width * heads >= 2);
        let c = ModelConfig {
            variant,
            seq_len,
            d_model: head_width * heads,
            heads,
            layers: 1,
            ..ModelConfig::sine_toy()
        };
        let model = Forecaster::new(&c, &mut rng(0)).unwrap();
        prop_assert_eq!(model.param_count(), count_params(&c).unwrap().total);
    }
}

#[test]
fn gradients_reach_every_block_of_every_monarch() {
    for seed in 0..10 {
        let mut g = rng(seed);
        let layer = EnhancedLayerParams::new(16, 16, 4, NormStyle::PostLn, Activation::Gelu, BlockInit::Random, &mut g)
            .unwrap();
        let x = Tensor::randn(&[16, 16], 1.0, &mut g);
        let w = Tensor::randn(&[16, 16], 1.0, &mut g);
        let grads = layer_gradients(&layer, &x, &w);
        let mut blocks_seen = 0;
        for (t, grad) in layer.tensors().iter().zip(&grads) {
            if let [b, _, _] = t.shape()[..] {
                for (j, block) in grad.data().chunks(b * b).enumerate() {
                    let peak = block.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    assert!(peak > 0.0, "seed {seed}: block {j} of a {b}x{b} factor has zero gradient");
                    blocks_seen += 1;
                }
            } else {
                assert!(grad.max_abs() > 0.0, "seed {seed}: tensor of shape {:?} has zero gradient", t.shape());
            }
        }
        // Per head: Q, K, V factors with 2 blocks each; two 4x4 sequence and
        // two 4x4 feature Monarchs.
        assert_eq!(blocks_seen, 4 * 3 * 2 * 2 + 2 * 2 * 4 + 2 * 2 * 4);
    }
}

#[test]
fn tape_gradients_are_bit_reproducible() {
    let build = || {
        let mut g = rng(99);
        let layer =
            EnhancedLayerParams::new(9, 8, 2, NormStyle::PreLn, Activation::Relu, BlockInit::Random, &mut g).unwrap();
        let x = Tensor::randn(&[9, 8], 1.0, &mut g);
        let w = Tensor::randn(&[9, 8], 1.0, &mut g);
        layer_gradients(&layer, &x, &w)
    };
    let (a, b) = (build(), build());
    for (ga, gb) in a.iter().zip(&b) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(ga), bits(gb));
    }
}

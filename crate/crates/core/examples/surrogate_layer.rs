//! Runs one enhanced encoder layer (surrogate attention plus surrogate FFN)
//! and compares its size with the dense layer it replaces.

use msb::autograd::Parameterized;
use msb::reference::DenseLayerParams;
use msb::surrogate::{enhanced_layer_forward, BlockInit, EnhancedLayerParams, NormStyle};
use msb::{Activation, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msb::Result<()> {
    let (seq_len, d_model, heads) = (96, 64, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = EnhancedLayerParams::new(
        seq_len,
        d_model,
        heads,
        NormStyle::PostLn,
        Activation::Gelu,
        BlockInit::Random,
        &mut rng,
    )?;
    let dense = DenseLayerParams::new(d_model, heads, 4 * d_model, NormStyle::PostLn, Activation::Gelu, &mut rng)?;

    let x = Tensor::randn(&[seq_len, d_model], 1.0, &mut rng);
    let y = enhanced_layer_forward(&x, &layer)?;

    println!("input {:?} -> output {:?}", x.shape(), y.shape());
    println!("sequence padded to {} for the Monarch mixing", layer.attn.seq.n_pad);
    println!("surrogate layer parameters: {}", layer.param_count());
    println!("dense layer parameters:     {}", dense.param_count());
    println!("output max abs value: {:.3}", y.max_abs());
    Ok(())
}

//! Rewrites a single-head surrogate attention block as a memoryless
//! state-space system and compares both evaluation paths.

use msb::surrogate::{surrogate_attention_forward, AttentionShape, BlockInit, SurrogateAttentionParams};
use msb::verification::LtiDecomposition;
use msb::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = AttentionShape {
        seq_len: 16,
        d_in: 4,
        heads: 1,
        d_out: 4,
    };
    let p = SurrogateAttentionParams::new(shape, BlockInit::Random, &mut rng)?;
    let x = Tensor::randn(&[16, 4], 1.0, &mut rng);

    let lti = LtiDecomposition::new(&x, &p)?;
    let direct = surrogate_attention_forward(&x, &p)?;
    let recurrent = lti.output(16, &p.w_out[0])?;

    println!("transition A is zero: {}", lti.transition.max_abs() == 0.0);
    println!("input map B is identity: {}", lti.input == Tensor::eye(4));
    println!("readout C shape: {:?}", lti.readout.shape());
    println!("|direct - state-space| = {:.1e}", direct.max_abs_diff(&recurrent)?);

    let inputs: Vec<&[f64]> = (0..16).map(|t| lti.values.row(t)).collect();
    let state = lti.state_after(&inputs[..8]);
    println!("state after 8 steps equals the 8th input: {}", state == inputs[7]);
    Ok(())
}

//! Checks tape gradients of a surrogate FFN block against central finite
//! differences on every coordinate.

use msb::autograd::gradcheck::{check_gradients, GradCheckConfig};
use msb::surrogate::{surrogate_ffn_on, BlockInit, SurrogateFfnParams};
use msb::{Activation, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ffn = SurrogateFfnParams::new(9, Activation::Gelu, BlockInit::Random, &mut rng)?;
    let x = Tensor::randn(&[5, 9], 1.0, &mut rng);
    let weights = Tensor::randn(&[5, 9], 1.0, &mut rng);

    let structure = ffn.clone();
    let report = check_gradients(&mut ffn, &GradCheckConfig::default(), |tape, b| {
        let xv = tape.constant(x.clone());
        let y = surrogate_ffn_on(tape, &structure, b, xv)?;
        let w = tape.constant(weights.clone());
        let weighted = tape.mul(y, w)?;
        Ok(tape.sum(weighted))
    })?;

    println!("coordinates checked: {}", report.coordinates_checked);
    println!("max relative error:  {:.3e}", report.max_rel_err);
    println!("passed:              {}", report.passed);
    Ok(())
}

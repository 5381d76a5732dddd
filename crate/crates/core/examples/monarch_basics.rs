//! Builds a Monarch matrix, applies it on both sides and compares the
//! factored result with the materialized `P·L·P·R·P` product.

use msb::structured::{meter, monarch_param_count, MonarchMatrix, Side};
use msb::tensor::matmul;
use msb::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [4, 16, 64, 256] {
        let m = MonarchMatrix::random(n, &mut rng)?;
        let x = Tensor::randn(&[n, 8], 1.0, &mut rng);

        let (left, flops) = meter::measure(|| m.apply(&x, Side::Left));
        let left = left?;
        let dense = m.to_dense();
        let diff_left = left.max_abs_diff(&matmul(&dense, &x)?)?;

        let xt = x.transpose()?;
        let right = m.apply(&xt, Side::Right)?;
        let diff_right = right.max_abs_diff(&matmul(&xt, &dense)?)?;

        println!(
            "n={n:>4}  params={:>6} (dense {:>6})  apply FLOPs={flops:>7}  |left-dense|={diff_left:.1e}  |right-dense|={diff_right:.1e}",
            monarch_param_count(n)?,
            n * n,
        );
    }
    Ok(())
}

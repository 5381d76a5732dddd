//! Sequence Monarchs that make the mixing output at position `k` equal to
//! `x_k·x_{k−1}²` (short-term) or `x_k·x_0²` (long-term).

use msb::surrogate::sequence_mixing;
use msb::verification::{build_expressiveness, check_expressiveness, DependencyMode};
use msb::Tensor;

fn main() -> msb::Result<()> {
    let x = [2.0, 3.0, 5.0, 7.0];
    let t = Tensor::new(vec![4, 1], x.to_vec())?;
    for (mode, k) in [(DependencyMode::ShortTerm, 1), (DependencyMode::LongTerm, 2)] {
        let c = build_expressiveness(4, mode, k)?;
        let (m1, m2) = c.monarchs()?;
        let y = sequence_mixing(&m1, &m2, &t, &t, &t)?;
        println!("{mode:?}: x = {x:?}, y_{k} = {} (expected {})", y.at(k, 0), c.expected(&x));
    }

    for n in [4, 16, 64] {
        for mode in [DependencyMode::ShortTerm, DependencyMode::LongTerm] {
            let c = build_expressiveness(n, mode, n - 1)?;
            let r = check_expressiveness(&c, 200, 0)?;
            println!("N={n:>2} {mode:?} k={}: max diff {:.1e} over {} inputs", n - 1, r.max_abs_diff, r.seeds_run);
        }
    }
    Ok(())
}

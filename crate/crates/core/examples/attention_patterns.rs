//! Attention with query-independent diagonal or vertical scoring patterns,
//! compared with its convolution and fixed-tap rewrites.

use msb::reference::{
    fixed_tap_forward, pattern_matrix, patterned_mhsa_forward, sum_of_convs_forward, AttentionPattern, ConvKernel,
};
use msb::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, heads) = (16, 2);
    let x = Tensor::randn(&[n, 8], 1.0, &mut rng);
    let w: Vec<Tensor> = (0..heads).map(|_| Tensor::randn(&[8, 4], 1.0, &mut rng)).collect();

    let diagonal = AttentionPattern::diagonal(n, vec![0.25, 0.5, 0.25])?;
    let a = pattern_matrix(&diagonal);
    let attention = patterned_mhsa_forward(&x, &vec![a; heads], &w)?;
    let kernels: Vec<ConvKernel> = w.iter().map(|wh| ConvKernel::from_pattern(&diagonal, wh)).collect();
    let convs = sum_of_convs_forward(&x, &kernels)?;
    println!("diagonal band {:?}", diagonal.offsets());
    println!("  |attention - sum of convolutions| = {:.1e}", attention.max_abs_diff(&convs)?);

    let columns = vec![0, 5, 11];
    let g = vec![0.5, 0.3, 0.2];
    let vertical = AttentionPattern::vertical(n, columns.clone(), g.clone())?;
    let a = pattern_matrix(&vertical);
    let attention = patterned_mhsa_forward(&x, &vec![a; heads], &w)?;
    let taps = fixed_tap_forward(&x, &columns, &g, &w)?;
    println!("vertical columns {columns:?} with weights {g:?}");
    println!("  |attention - fixed taps| = {:.1e}", attention.max_abs_diff(&taps)?);
    println!("  rows identical: {}", (1..n).all(|q| attention.row(q) == attention.row(0)));
    Ok(())
}

//! Parameter and FLOP accounting for the desk configuration, broken down by
//! role.

use msb::bench::accounting::{count_flops, count_params, efficiency_ratios, ModelConfig, Role, Variant};

fn main() -> msb::Result<()> {
    let desk = ModelConfig::desk();
    for variant in [Variant::Dense, Variant::Surrogate] {
        let c = desk.with_variant(variant);
        let p = count_params(&c)?;
        let f = count_flops(&c)?;
        println!("{variant:?}");
        println!(
            "  params: embedding {} projections {} mixing {} output {} ffn {} norms {} head {} total {}",
            p.embedding, p.projections, p.mixing, p.output_projection, p.ffn, p.norms, p.head, p.total
        );
        for role in [Role::Embedding, Role::Lp, Role::Attention, Role::Ffn, Role::Head] {
            println!("  {role:?} multiply-adds: {}", f.role_mul_adds(role));
        }
        println!("  total FLOPs: {}", f.total_flops());
    }
    let e = efficiency_ratios(&desk)?;
    println!("surrogate/dense parameters: {:.4}", e.param_ratio);
    println!("surrogate/dense FLOPs:      {:.4}", e.flop_ratio);
    Ok(())
}

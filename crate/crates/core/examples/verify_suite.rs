//! Runs every verification check group with a reduced seed budget.

use msb::verification::{run_all, VerifyConfig};

fn main() -> msb::Result<()> {
    let cfg = VerifyConfig {
        seeds: 10,
        ..Default::default()
    };
    let results = run_all(&cfg)?;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<40} {:.2e} <= {:.0e}", r.name, r.max_abs_diff, r.threshold);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(())
}

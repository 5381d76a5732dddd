//! Fits log-log slopes to the analytic FLOP counts and to measured Monarch
//! apply times.

use msb::bench::scaling::{scaling_report, WALL_CLOCK_SIZES, WALL_CLOCK_WIDTH};

fn main() -> msb::Result<()> {
    let r = scaling_report(&[256, 1024, 4096], Some(&WALL_CLOCK_SIZES), 9, 0)?;
    println!("analytic Monarch slope: {:.4}", r.monarch_slope);
    println!("analytic dense attention slope: {:.4}", r.dense_slope);
    println!("measured Monarch apply, width {WALL_CLOCK_WIDTH}:");
    for p in &r.wall_clock {
        println!("  n={:>6}  {:>9.3} ms", p.n, p.seconds * 1e3);
    }
    if let Some(s) = r.wall_clock_slope {
        println!("measured slope: {s:.4}");
    }
    Ok(())
}

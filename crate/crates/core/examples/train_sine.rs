//! Trains the toy surrogate forecaster on a period-24 sine wave.
//!
//! Usage: `cargo run --release --example train_sine [epochs]`

use msb::bench::{train, ModelConfig, SineDatasetSpec, TrainConfig};

fn main() -> msb::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let config = ModelConfig::sine_toy();
    let tc = TrainConfig {
        epochs,
        ..Default::default()
    };
    let r = train(&config, &SineDatasetSpec::default(), &tc)?;
    for e in r.curve.iter().filter(|e| e.epoch % 20 == 0) {
        println!("epoch {:>3}  train {:.3e}  val {:.3e}", e.epoch, e.train_loss, e.val_loss);
    }
    println!("parameters: {}", r.params);
    println!("best epoch {} (val {:.3e})", r.best_epoch, r.best_val_loss);
    println!("test MSE {:.3e}, MAE {:.3e}, {:.1} s", r.test_mse, r.test_mae, r.seconds);
    Ok(())
}

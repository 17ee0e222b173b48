//! Masked vs unmasked shapelets on the planted-pattern benchmark.
//!
//! cargo run --release -p masked-shapelets --example synthetic_run -- [train] [test] [iters] [K] [lmin] [lmax]

use std::time::Instant;

use masked_shapelets::baselines::train_unmasked;
use masked_shapelets::eval::{error_rate, mask_localization};
use masked_shapelets::synthgen::{generate, SynthConfig};
use masked_shapelets::trainer::{train, TrainConfig};
use masked_shapelets::Activation;

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> masked_shapelets::Result<()> {
    let synth = SynthConfig {
        train_size: arg(1, 200),
        test_size: arg(2, 100),
        seed: 7,
        ..SynthConfig::default()
    };
    let (train_ds, test_ds) = generate(&synth)?;
    let cfg = TrainConfig {
        max_iter: arg(3, 100),
        num_shapelets: arg(4, 20),
        min_length: arg(5, 20),
        max_length: arg(6, 30),
        lambda: 0.01,
        seed: 1,
        ..TrainConfig::default()
    };

    for (name, activation, masked) in [
        ("masked relu", Activation::Relu, true),
        ("unmasked", Activation::Relu, false),
        ("masked sigmoid", Activation::Sigmoid, true),
    ] {
        let cfg = TrainConfig { activation, ..cfg.clone() };
        let started = Instant::now();
        let (model, log) = if masked { train(&cfg, &train_ds)? } else { train_unmasked(&cfg, &train_ds)? };
        let last = log.records.last().map(|r| (r.objective, r.train_error));
        println!(
            "{name:>15}: train {:?} test error {:.3} localization {:.2} ({:.1}s)",
            last,
            error_rate(&model, &test_ds)?,
            mask_localization(&model, &[0, 1]),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

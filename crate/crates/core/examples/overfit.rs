//! Overfit the tiny model to the synthetic moving-gradient clip.
//!
//! cargo run --release --example overfit -- [epochs] [seed] [--flat]

use std::time::Instant;

use hinerv::train::{evaluate_psnr, train, Hooks, TrainConfig};
use hinerv::video::moving_gradient;
use hinerv::{HiNeRV, ModelConfig};

fn main() -> hinerv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flat = args.iter().any(|a| a == "--flat");
    let nums: Vec<u64> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let epochs = nums.first().copied().unwrap_or(300) as usize;
    let seed = nums.get(1).copied().unwrap_or(0);

    let video = moving_gradient(8, 64, 64);
    let mut cfg = ModelConfig::tiny(8);
    cfg.hierarchical = !flat;
    let mut model = HiNeRV::new(cfg, seed)?;
    println!("{} parameters, hierarchical encoding {}", model.param_count(), !flat);
    let tc = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let mut out = std::io::stdout();
    train(&mut model, &video, &tc, Hooks { log: Some(&mut out), ..Hooks::default() })?;
    println!(
        "frame-mode PSNR {:.2} dB after {epochs} epochs in {:.1}s",
        evaluate_psnr(&model, &video)?,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

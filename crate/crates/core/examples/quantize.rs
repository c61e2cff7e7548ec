//! Post-training versus quantization-aware fine-tuning on a briefly
//! trained tiny model, at several bit depths.
//!
//! cargo run --release --example quantize -- [epochs] [qat-epochs]

use hinerv::compress::{qat_finetune, quantized_model, Bitstream, QatConfig};
use hinerv::train::{evaluate_psnr, train, Hooks, TrainConfig};
use hinerv::video::moving_gradient;
use hinerv::{HiNeRV, ModelConfig};

fn main() -> hinerv::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epochs = args.first().copied().unwrap_or(60);
    let qat_epochs = args.get(1).copied().unwrap_or(10);
    let video = moving_gradient(8, 64, 64);
    let mut model = HiNeRV::new(ModelConfig::tiny(8), 0)?;
    let tc = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    train(&mut model, &video, &tc, Hooks::default())?;
    println!("float model: {:.2} dB", evaluate_psnr(&model, &video)?);
    for bits in [4u8, 6, 8] {
        let ptq = evaluate_psnr(&quantized_model(&model, None, bits)?, &video)?;
        let mut tuned = model.clone();
        let qat = QatConfig {
            epochs: qat_epochs,
            bits,
            ..QatConfig::default()
        };
        qat_finetune(&mut tuned, &video, &tc, &qat, None)?;
        let qat_psnr = evaluate_psnr(&quantized_model(&tuned, None, bits)?, &video)?;
        let bytes = Bitstream::from_model(&tuned, None, bits)?.to_bytes()?.len();
        println!("{bits} bits: post-training {ptq:.2} dB, with QAT {qat_psnr:.2} dB, {bytes} bytes");
    }
    Ok(())
}

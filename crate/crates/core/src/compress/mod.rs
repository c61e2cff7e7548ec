//! Pruning, fixed-point quantization, entropy coding and the bitstream.

mod bitstream;
mod coder;
mod prune;
mod quant;

pub use coder::{decode as entropy_decode, encode as entropy_encode, FreqModel};
pub use prune::{prune, prune_scores, prune_tensors, PruneMask, DEFAULT_LAMBDA};
pub use quant::{dequantize, fake_quantize, quant_noise_forward, quantize_tensor, QuantSpec, DEFAULT_BITS};

pub use bitstream::{bits_per_pixel, decode_runs, encode_runs, Bitstream, EncodedTensor, SizeReport, TensorSize, MAGIC, VERSION};

use crate::error::Result;
use crate::train::{train, EpochLog, Hooks, QuantNoise, TrainConfig};
use crate::video::VideoClip;
use crate::HiNeRV;

/// Quantization-aware fine-tuning settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QatConfig {
    pub epochs: usize,
    /// Multiplies the training learning rate.
    pub lr_factor: f64,
    pub noise_ratio: f64,
    pub bits: u8,
}

impl Default for QatConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr_factor: 0.1,
            noise_ratio: 0.9,
            bits: DEFAULT_BITS,
        }
    }
}

/// One pruning round on top of `mask`, then `epochs` of fine-tuning with
/// the mask frozen.
pub fn prune_finetune(
    model: &mut HiNeRV,
    video: &VideoClip,
    train_cfg: &TrainConfig,
    mask: Option<&PruneMask>,
    ratio: f64,
    epochs: usize,
) -> Result<(PruneMask, Vec<EpochLog>)> {
    let mask = prune(model, mask, ratio)?;
    mask.apply(model.params_mut());
    let cfg = TrainConfig {
        epochs,
        ..train_cfg.clone()
    };
    let log = train(
        model,
        video,
        &cfg,
        Hooks {
            mask: Some(&mask),
            ..Hooks::default()
        },
    )?;
    Ok((mask, log))
}

/// Fine-tunes with a fresh random `noise_ratio` share of the weights
/// replaced by their quantized values at every step.
pub fn qat_finetune(
    model: &mut HiNeRV,
    video: &VideoClip,
    train_cfg: &TrainConfig,
    qat: &QatConfig,
    mask: Option<&PruneMask>,
) -> Result<Vec<EpochLog>> {
    let cfg = TrainConfig {
        epochs: qat.epochs,
        base_lr: train_cfg.base_lr * qat.lr_factor,
        ..train_cfg.clone()
    };
    train(
        model,
        video,
        &cfg,
        Hooks {
            mask,
            quant_noise: Some(QuantNoise {
                bits: qat.bits,
                ratio: qat.noise_ratio,
            }),
            log: None,
        },
    )
}

/// `model` with every parameter passed through the `bits`-bit quantizer
/// (what a decoder reconstructs).
pub fn quantized_model(model: &HiNeRV, mask: Option<&PruneMask>, bits: u8) -> Result<HiNeRV> {
    Bitstream::from_model(model, mask, bits)?.to_model()
}

//! Per-video optimisation: random patches, L1 + MS-SSIM loss, clipped Adam
//! with warmup and cosine decay.

mod metrics;
mod optim;
mod sampler;

pub use metrics::{
    loss_graph, ms_ssim, ms_ssim_graph, ms_ssim_levels, ms_ssim_weights, mse, psnr, psnr_from_mse, PSNR_CAP,
    SSIM_WINDOW,
};
pub use optim::{clip_global_norm, Adam, Schedule};
pub use sampler::{all_patches, sample_patches};

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compress::{quant_noise_forward, PruneMask, QuantSpec};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::grid::PatchCoord;
use crate::model::{HiNeRV, Target};
use crate::tensor::{Graph, Tensor};
use crate::video::VideoClip;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    /// Fraction of all steps spent in linear warmup.
    pub warmup: f64,
    pub batch_frames: usize,
    /// Overrides `batch_frames · patches per frame` when set.
    pub patches_per_step: Option<usize>,
    pub grad_clip_norm: f64,
    pub loss_alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            base_lr: 2e-3,
            warmup: 0.1,
            batch_frames: 1,
            patches_per_step: None,
            grad_clip_norm: 1.0,
            loss_alpha: 0.7,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn patches_per_step(&self, partition: (usize, usize)) -> usize {
        self.patches_per_step
            .unwrap_or(self.batch_frames * partition.0 * partition.1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(0.0..=1.0).contains(&self.loss_alpha) {
            return bad(format!("loss_alpha must be in [0, 1], got {}", self.loss_alpha));
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return bad(format!("warmup must be in [0, 1], got {}", self.warmup));
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return bad(format!("lr must be non-negative, got {}", self.base_lr));
        }
        if self.grad_clip_norm <= 0.0 {
            return bad(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        if self.batch_frames == 0 || self.patches_per_step == Some(0) {
            return bad("batch size must be at least one patch".into());
        }
        Ok(())
    }

    /// Applies `train.*`-style keys (without the prefix) from a config file.
    pub(crate) fn apply_kv(&mut self, kv: &mut KeyValues, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}{k}");
        macro_rules! set {
            ($field:expr, $name:literal) => {
                if let Some(v) = kv.get(&key($name))? {
                    $field = v;
                }
            };
        }
        set!(self.epochs, "epochs");
        set!(self.base_lr, "lr");
        set!(self.warmup, "warmup");
        set!(self.batch_frames, "batch_frames");
        set!(self.grad_clip_norm, "grad_clip");
        set!(self.loss_alpha, "loss_alpha");
        set!(self.beta1, "beta1");
        set!(self.beta2, "beta2");
        set!(self.seed, "seed");
        if let Some(v) = kv.get(&key("patches_per_step"))? {
            self.patches_per_step = Some(v);
        }
        self.validate()
    }
}

/// Quantization-aware training with partial quantization noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantNoise {
    pub bits: u8,
    pub ratio: f64,
}

#[derive(Default)]
pub struct Hooks<'a> {
    /// Pruned weights stay zero and get no gradient.
    pub mask: Option<&'a PruneMask>,
    pub quant_noise: Option<QuantNoise>,
    /// CSV sink: `epoch,step,lr,loss,psnr`, one row per epoch.
    pub log: Option<&'a mut dyn Write>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps completed.
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// Training PSNR over every patch seen this epoch.
    pub psnr: f64,
}

pub const LOG_HEADER: &str = "epoch,step,lr,loss,psnr";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!("{},{},{:.6e},{:.6},{:.4}", self.epoch, self.step, self.lr, self.loss, self.psnr)
    }
}

/// Worker count: `HINERV_THREADS` if set, else the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("HINERV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct PatchResult {
    loss: f64,
    sse: f64,
    grads: Vec<Option<Vec<f32>>>,
}

fn patch_pass(
    model: &HiNeRV,
    values: &[Tensor<f32>],
    p: PatchCoord,
    video: &VideoClip,
    alpha: f64,
) -> Result<PatchResult> {
    let m = model.config().patch_size;
    let target = video.patch(p, m)?;
    let mut g = Graph::<f32>::new();
    let vars = model.bind_values(&mut g, values, true);
    let y = model.forward(&mut g, &vars, p.t, Target::Patch { i: p.i, j: p.j })?;
    let sse = g
        .value(y)
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| ((a - b) as f64).powi(2))
        .sum();
    let tv = g.constant(target);
    let l = loss_graph(&mut g, y, tv, alpha)?;
    let loss = g.value(l).data()[0] as f64;
    if !loss.is_finite() {
        return Ok(PatchResult {
            loss,
            sse,
            grads: Vec::new(),
        });
    }
    g.backward(l)?;
    let grads = vars.iter().map(|&v| g.take_grad(v)).collect();
    Ok(PatchResult { loss, sse, grads })
}

/// Loss, squared error and mean gradient over `patches`; the gradient sum
/// runs in patch order whatever the thread count.
fn batch_gradients(
    model: &HiNeRV,
    values: &[Tensor<f32>],
    patches: &[PatchCoord],
    video: &VideoClip,
    alpha: f64,
    threads: usize,
) -> Result<(f64, f64, Vec<Vec<f32>>)> {
    let results: Vec<Result<PatchResult>> = if threads <= 1 || patches.len() == 1 {
        patches.iter().map(|&p| patch_pass(model, values, p, video, alpha)).collect()
    } else {
        let chunk = patches.len().div_ceil(threads.min(patches.len()));
        std::thread::scope(|s| {
            let handles: Vec<_> = patches
                .chunks(chunk)
                .map(|c| {
                    s.spawn(move || {
                        c.iter()
                            .map(|&p| patch_pass(model, values, p, video, alpha))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    };
    let mut grads: Vec<Vec<f32>> = values.iter().map(|t| vec![0.0; t.len()]).collect();
    let (mut loss, mut sse) = (0.0, 0.0);
    for r in results {
        let r = r?;
        loss += r.loss;
        sse += r.sse;
        if !r.loss.is_finite() {
            continue;
        }
        for (acc, g) in grads.iter_mut().zip(r.grads) {
            if let Some(g) = g {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
    }
    let inv = 1.0 / patches.len() as f32;
    for v in grads.iter_mut().flatten() {
        *v *= inv;
    }
    Ok((loss / patches.len() as f64, sse, grads))
}

/// Trains `model` in place and returns one log entry per epoch.
pub fn train(model: &mut HiNeRV, video: &VideoClip, cfg: &TrainConfig, mut hooks: Hooks<'_>) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let mc = model.config().clone();
    if video.len() != mc.frames || video.height() != mc.height || video.width() != mc.width {
        return Err(Error::config(format!(
            "model expects {}x{}x{} frames, video is {}x{}x{}",
            mc.frames,
            mc.height,
            mc.width,
            video.len(),
            video.height(),
            video.width()
        )));
    }
    if let Some(q) = hooks.quant_noise {
        QuantSpec::fit(&[], q.bits)?;
        if !(0.0..=1.0).contains(&q.ratio) {
            return Err(Error::config(format!("noise ratio must be in [0, 1], got {}", q.ratio)));
        }
    }
    let partition = mc.patch_grid();
    let m = mc.patch_size;
    let per_step = cfg.patches_per_step(partition);
    let total_patches = mc.frames * partition.0 * partition.1;
    let steps_per_epoch = total_patches.div_ceil(per_step);
    let sched = Schedule {
        base_lr: cfg.base_lr,
        warmup: cfg.warmup,
        total_steps: cfg.epochs * steps_per_epoch,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let threads = worker_threads();
    let mut opt = Adam::new(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
    if let Some(mask) = hooks.mask {
        mask.apply(model.params_mut());
    }
    if let Some(log) = hooks.log.as_deref_mut() {
        writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io("<training log>", e))?;
    }
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = sample_patches(&mut rng, mc.frames, partition, total_patches, false)?;
        let (mut loss_sum, mut sse_sum, mut lr) = (0.0, 0.0, 0.0);
        for batch in order.chunks(per_step) {
            let mut replaced: Option<Vec<Vec<bool>>> = None;
            let values: Vec<Tensor<f32>> = match hooks.quant_noise {
                Some(q) => {
                    let mut rep = Vec::with_capacity(model.params().len());
                    let mut vals = Vec::with_capacity(model.params().len());
                    for p in model.params() {
                        let spec = QuantSpec::fit(p.data(), q.bits)?;
                        let (v, r) = quant_noise_forward(p.data(), spec, q.ratio, &mut noise_rng)?;
                        vals.push(Tensor::new(p.shape().to_vec(), v)?);
                        rep.push(r);
                    }
                    replaced = Some(rep);
                    vals
                }
                None => model.params().to_vec(),
            };
            let (loss, sse, mut grads) = batch_gradients(model, &values, batch, video, cfg.loss_alpha, threads)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {step}"
                )));
            }
            if let Some(rep) = &replaced {
                for (g, r) in grads.iter_mut().zip(rep) {
                    for (v, &r) in g.iter_mut().zip(r) {
                        if r {
                            *v = 0.0;
                        }
                    }
                }
            }
            if let Some(mask) = hooks.mask {
                mask.mask_grads(&mut grads);
            }
            clip_global_norm(&mut grads, cfg.grad_clip_norm);
            lr = sched.lr(step);
            opt.step(model.params_mut(), &grads, lr);
            if let Some(mask) = hooks.mask {
                mask.apply(model.params_mut());
            }
            loss_sum += loss * batch.len() as f64;
            sse_sum += sse;
            step += 1;
        }
        let entry = EpochLog {
            epoch,
            step,
            lr,
            loss: loss_sum / total_patches as f64,
            psnr: psnr_from_mse(sse_sum / (total_patches * m * m * 3) as f64, 1.0),
        };
        if let Some(log) = hooks.log.as_deref_mut() {
            writeln!(log, "{}", entry.csv_row()).map_err(|e| Error::io("<training log>", e))?;
        }
        logs.push(entry);
    }
    Ok(logs)
}

/// Per-frame PSNR and MS-SSIM of `recon` against `original`.
pub fn frame_metrics(original: &VideoClip, recon: &VideoClip) -> Result<Vec<(f64, f64)>> {
    if original.len() != recon.len() || original.height() != recon.height() || original.width() != recon.width() {
        return Err(Error::usage(format!(
            "clips differ in size: {}x{}x{} vs {}x{}x{}",
            original.len(),
            original.height(),
            original.width(),
            recon.len(),
            recon.height(),
            recon.width()
        )));
    }
    original
        .frames()
        .iter()
        .zip(recon.frames())
        .map(|(a, b)| Ok((psnr(b.data(), a.data()), ms_ssim(b, a)?)))
        .collect()
}

/// Renders every frame of `model` (frame mode).
pub fn render(model: &HiNeRV) -> Result<VideoClip> {
    let frames = (0..model.config().frames)
        .map(|t| model.forward_frame(t))
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames)
}

/// Whole-clip PSNR (from the pooled MSE) of `model` against `video`.
pub fn evaluate_psnr(model: &HiNeRV, video: &VideoClip) -> Result<f64> {
    let out = render(model)?;
    let n = video.len() as f64;
    let mse_sum: f64 = video
        .frames()
        .iter()
        .zip(out.frames())
        .map(|(a, b)| mse(b.data(), a.data()))
        .sum();
    Ok(psnr_from_mse(mse_sum / n, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::moving_gradient;
    use crate::ModelConfig;

    #[test]
    fn gradients_do_not_depend_on_thread_count() {
        let mut cfg = ModelConfig::tiny(2);
        cfg.channels = 16;
        let model = HiNeRV::new(cfg.clone(), 3).unwrap();
        let video = moving_gradient(2, 64, 64);
        let patches = all_patches(2, cfg.patch_grid());
        let run = |threads| batch_gradients(&model, model.params(), &patches, &video, 0.7, threads).unwrap();
        let (l1, s1, g1) = run(1);
        let (l3, s3, g3) = run(3);
        assert_eq!((l1.to_bits(), s1.to_bits()), (l3.to_bits(), s3.to_bits()));
        assert_eq!(g1, g3);
    }
}

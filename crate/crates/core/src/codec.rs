//! The codec commands: encode (train + compress), decode, eval and info.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::compress::{
    bits_per_pixel, prune_finetune, qat_finetune, Bitstream, PruneMask, QatConfig, DEFAULT_BITS,
};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{frame_metrics, render, train, Hooks, TrainConfig};
use crate::video::{read_video, write_video, VideoClip, VideoFormat};
use crate::HiNeRV;

/// Stage counts of the compression pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodeOptions {
    pub seed: u64,
    /// Overrides the training epochs of the config.
    pub epochs: Option<usize>,
    pub prune_ratio: f64,
    pub prune_epochs: usize,
    pub qat_epochs: usize,
    pub noise_ratio: f64,
    pub bits: u8,
    /// Where to write the training CSV log.
    pub log: Option<PathBuf>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: None,
            prune_ratio: 0.15,
            prune_epochs: 60,
            qat_epochs: 30,
            noise_ratio: 0.9,
            bits: DEFAULT_BITS,
            log: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Frame,
    Patch,
}

impl DecodeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(Self::Frame),
            "patch" => Ok(Self::Patch),
            _ => Err(Error::usage(format!("unknown decode mode '{s}' (frame | patch)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameScore {
    pub frame: usize,
    pub psnr: f64,
    pub msssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub frames: Vec<FrameScore>,
    pub psnr: f64,
    pub msssim: f64,
    pub bytes: Option<usize>,
    pub bpp: Option<f64>,
    pub encode_seconds: Option<f64>,
    pub decode_seconds: Option<f64>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    /// Mean PSNR of the fine-tuned model before weight quantization.
    pub unquantized_psnr: Option<f64>,
}

pub const CSV_HEADER: &str = "frame,psnr,msssim";

impl RunReport {
    fn from_scores(scores: Vec<(f64, f64)>) -> Self {
        let n = scores.len().max(1) as f64;
        Self {
            psnr: scores.iter().map(|s| s.0).sum::<f64>() / n,
            msssim: scores.iter().map(|s| s.1).sum::<f64>() / n,
            frames: scores
                .into_iter()
                .enumerate()
                .map(|(frame, (psnr, msssim))| FrameScore { frame, psnr, msssim })
                .collect(),
            ..Self::default()
        }
    }

    fn set_size(&mut self, bytes: usize, clip: &VideoClip) {
        self.bytes = Some(bytes);
        self.bpp = Some(bits_per_pixel(bytes, clip.len(), clip.height(), clip.width()));
    }

    /// Header, one row per frame, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for f in &self.frames {
            let _ = writeln!(s, "{},{:.6},{:.6}", f.frame, f.psnr, f.msssim);
        }
        let _ = writeln!(s, "mean,{:.6},{:.6}", self.psnr, self.msssim);
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames: {}", self.frames.len());
        let _ = writeln!(s, "psnr: {:.4} dB", self.psnr);
        let _ = writeln!(s, "ms-ssim: {:.6}", self.msssim);
        if let (Some(b), Some(bpp)) = (self.bytes, self.bpp) {
            let _ = writeln!(s, "bytes: {b}");
            let _ = writeln!(s, "bpp: {bpp:.6}");
        }
        if let Some(t) = self.encode_seconds {
            let _ = writeln!(s, "encode: {t:.2} s");
        }
        if let Some(t) = self.decode_seconds {
            let _ = writeln!(s, "decode: {t:.2} s");
        }
        if let Some(p) = self.unquantized_psnr {
            let _ = writeln!(s, "unquantized psnr: {p:.4} dB");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed: {seed}");
        }
        if let Some(c) = &self.config {
            s.push_str("config:\n");
            for l in c.lines() {
                let _ = writeln!(s, "  {l}");
            }
        }
        s
    }
}

/// Model and training settings from config text. Without a `preset` or an
/// explicit `channels` key the tiny preset is used; missing `frames`,
/// `height` and `width` are taken from `clip`. Training keys carry a
/// `train.` prefix.
pub fn load_config(text: &str, clip: &VideoClip) -> Result<(ModelConfig, TrainConfig)> {
    let mut kv = KeyValues::parse(text)?;
    if !kv.contains("preset") && !kv.contains("channels") {
        kv.set_default("preset", "tiny");
    }
    kv.set_default("frames", clip.len());
    kv.set_default("height", clip.height());
    kv.set_default("width", clip.width());
    let model = ModelConfig::from_kv(&mut kv)?;
    let mut tc = TrainConfig::default();
    tc.apply_kv(&mut kv, "train.")?;
    kv.finish()?;
    if (model.frames, model.height, model.width) != (clip.len(), clip.height(), clip.width()) {
        return Err(Error::config(format!(
            "config describes {}x{}x{} but the video is {}x{}x{}",
            model.frames,
            model.height,
            model.width,
            clip.len(),
            clip.height(),
            clip.width()
        )));
    }
    Ok((model, tc))
}

/// Output of [`encode_clip`].
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    /// Mean per-frame PSNR (8-bit output) of the model just before its
    /// weights were quantized.
    pub unquantized_psnr: f64,
}

/// Runs the whole pipeline on an in-memory clip.
pub fn encode_clip(
    clip: &VideoClip,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    opts: &EncodeOptions,
) -> Result<Encoded> {
    let mut tc = train_cfg.clone();
    tc.seed = opts.seed;
    if let Some(e) = opts.epochs {
        tc.epochs = e;
    }
    let mut model = HiNeRV::new(model_cfg.clone(), opts.seed).map_err(|e| e.in_stage("model"))?;

    let mut log_file = match &opts.log {
        Some(p) => Some(fs::File::create(p).map_err(|e| Error::io(p, e).in_stage("train"))?),
        None => None,
    };
    let hooks = Hooks {
        log: log_file.as_mut().map(|f| f as &mut dyn std::io::Write),
        ..Hooks::default()
    };
    train(&mut model, clip, &tc, hooks).map_err(|e| e.in_stage("train"))?;

    let mut mask: Option<PruneMask> = None;
    if opts.prune_ratio > 0.0 {
        let (m, _) = prune_finetune(&mut model, clip, &tc, None, opts.prune_ratio, opts.prune_epochs)
            .map_err(|e| e.in_stage("prune"))?;
        mask = Some(m);
    }
    if opts.qat_epochs > 0 {
        let qat = QatConfig {
            epochs: opts.qat_epochs,
            noise_ratio: opts.noise_ratio,
            bits: opts.bits,
            ..QatConfig::default()
        };
        qat_finetune(&mut model, clip, &tc, &qat, mask.as_ref()).map_err(|e| e.in_stage("qat"))?;
    }
    let unquantized_psnr = mean_psnr(clip, &model).map_err(|e| e.in_stage("quantize"))?;
    let bytes = Bitstream::from_model(&model, mask.as_ref(), opts.bits)
        .and_then(|b| b.to_bytes())
        .map_err(|e| e.in_stage("quantize"))?;
    Ok(Encoded { bytes, unquantized_psnr })
}

fn mean_psnr(clip: &VideoClip, model: &HiNeRV) -> Result<f64> {
    let scores = frame_metrics(clip, &render(model)?.quantized_8bit())?;
    Ok(scores.iter().map(|s| s.0).sum::<f64>() / scores.len().max(1) as f64)
}

/// Reads `video`, encodes it and writes `out`. The report scores the
/// decoded reconstruction.
pub fn cmd_encode(
    video: &Path,
    format: Option<VideoFormat>,
    config: Option<&Path>,
    out: &Path,
    opts: &EncodeOptions,
) -> Result<RunReport> {
    let t0 = Instant::now();
    let clip = read_video(video, format.unwrap_or_else(|| VideoFormat::detect(video)))
        .map_err(|e| e.in_stage("read"))?;
    let text = match config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    let (model_cfg, train_cfg) = load_config(&text, &clip)?;
    let Encoded { bytes, unquantized_psnr } = encode_clip(&clip, &model_cfg, &train_cfg, opts)?;
    fs::write(out, &bytes).map_err(|e| Error::io(out, e).in_stage("write"))?;
    let encode_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let recon = decode_bytes(&bytes, None, DecodeMode::Frame)?;
    let decode_seconds = t1.elapsed().as_secs_f64();
    let mut report = RunReport::from_scores(frame_metrics(&clip, &recon.quantized_8bit())?);
    report.set_size(bytes.len(), &clip);
    report.encode_seconds = Some(encode_seconds);
    report.decode_seconds = Some(decode_seconds);
    report.config = Some(model_cfg.to_text());
    report.seed = Some(opts.seed);
    report.unquantized_psnr = Some(unquantized_psnr);
    Ok(report)
}

/// Frames `range` (default: all) of the clip stored in `bytes`.
pub fn decode_bytes(bytes: &[u8], range: Option<Range<usize>>, mode: DecodeMode) -> Result<VideoClip> {
    let model = Bitstream::from_bytes(bytes)?.to_model()?;
    let frames = model.config().frames;
    let range = range.unwrap_or(0..frames);
    if range.start >= range.end || range.end > frames {
        return Err(Error::usage(format!(
            "frame range {}..{} outside 0..{frames}",
            range.start, range.end
        )));
    }
    let out = range
        .map(|t| match mode {
            DecodeMode::Frame => model.forward_frame(t),
            DecodeMode::Patch => model.forward_frame_patchwise(t),
        })
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(out)
}

pub fn cmd_decode(
    input: &Path,
    out: &Path,
    format: Option<VideoFormat>,
    range: Option<Range<usize>>,
    mode: DecodeMode,
) -> Result<VideoClip> {
    let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
    let clip = decode_bytes(&bytes, range, mode)?;
    write_video(&clip, out, format.unwrap_or_else(|| VideoFormat::detect(out)))?;
    Ok(clip)
}

/// Scores `reconstructed` against `original`; with a bitstream, adds its
/// size and bits per pixel.
pub fn cmd_eval(
    original: &Path,
    reconstructed: &Path,
    bitstream: Option<&Path>,
    format: Option<VideoFormat>,
) -> Result<RunReport> {
    let fmt = |p: &Path| format.unwrap_or_else(|| VideoFormat::detect(p));
    let a = read_video(original, fmt(original))?;
    let b = read_video(reconstructed, fmt(reconstructed))?;
    let mut report = RunReport::from_scores(frame_metrics(&a, &b)?);
    if let Some(p) = bitstream {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let bs = Bitstream::from_bytes(&bytes)?;
        report.config = Some(bs.config.to_text());
        report.set_size(bytes.len(), &a);
    }
    Ok(report)
}

/// Human-readable dump of a bitstream's layout.
pub fn info(bytes: &[u8]) -> Result<String> {
    let (bs, sizes) = Bitstream::decode(bytes)?;
    let specs = HiNeRV::layout_specs(&bs.config)?;
    let mut s = String::new();
    let _ = writeln!(s, "version: {}", crate::compress::VERSION);
    s.push_str("config:\n");
    for l in bs.config.to_text().lines() {
        let _ = writeln!(s, "  {l}");
    }
    let _ = writeln!(
        s,
        "{:<28} {:>16} {:>4} {:>12} {:>9} {:>8} {:>8}",
        "tensor", "shape", "bits", "scale", "sparsity", "payload", "bytes"
    );
    for ((t, spec), size) in bs.tensors.iter().zip(&specs).zip(&sizes.tensors) {
        let shape = t.shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
        let sparsity = match &t.mask {
            Some(_) => format!("{:.4}", t.pruned() as f64 / t.len().max(1) as f64),
            None => "-".into(),
        };
        let _ = writeln!(
            s,
            "{:<28} {:>16} {:>4} {:>12.6e} {:>9} {:>8} {:>8}",
            spec.name,
            shape,
            t.spec.bits,
            t.spec.scale,
            sparsity,
            size.payload,
            size.total()
        );
    }
    let mask = bs.mask();
    let tensor_bytes: usize = sizes.tensors.iter().map(|t| t.total()).sum();
    let _ = writeln!(s, "parameters: {}", bs.tensors.iter().map(|t| t.len()).sum::<usize>());
    let _ = writeln!(
        s,
        "sparsity: {:.4} ({} of {} prunable weights)",
        mask.sparsity(),
        mask.pruned(),
        mask.total()
    );
    let _ = writeln!(s, "container bytes: {}", sizes.container);
    let _ = writeln!(s, "tensor bytes: {tensor_bytes}");
    let _ = writeln!(s, "file bytes: {}", bytes.len());
    Ok(s)
}

pub fn cmd_info(input: &Path) -> Result<String> {
    let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
    info(&bytes)
}

/// Parses `a..b` (end exclusive).
pub fn parse_range(s: &str) -> Result<Range<usize>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::usage(format!("frame range must look like a..b, got '{s}'")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| Error::usage(format!("bad frame index '{v}'")))
    };
    Ok(p(a)?..p(b)?)
}

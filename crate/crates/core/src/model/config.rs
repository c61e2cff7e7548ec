use std::fmt::Write as _;

use crate::config::{join, KeyValues};
use crate::error::{Error, Result};
use crate::grid::{reduce_width, BaseGridConfig, LocalGridConfig};

/// Architecture hyperparameters. Everything else about a model (parameter
/// shapes, padding, stage sizes) is derived from this.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Output patch side `M`.
    pub patch_size: usize,
    pub depths: Vec<usize>,
    pub scales: Vec<usize>,
    /// Stem width `C_0`.
    pub channels: usize,
    pub reduction: f64,
    pub kernel: usize,
    pub expansion: usize,
    /// Expansion ratio of the final block's layers.
    pub last_expansion: usize,
    pub base_grid: BaseGridConfig,
    pub local_grid: LocalGridConfig,
    pub hierarchical: bool,
    /// Explicit per-stage paddings (stem + blocks); computed when absent.
    pub paddings: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    /// 1920x1080, 150-frame base grids.
    Uvg,
    /// 1920x1080, 40-frame base grids.
    MclJcv,
    /// 1280x720, strides (5, 2, 2, 2).
    Bunny,
}

pub const OUT_CHANNELS: usize = 3;
pub const NORM_EPS: f64 = 1e-6;

impl ModelConfig {
    /// Published configurations (`xxs`, `xs`, `s`, `m`, `l`, `xl`, `xxl`) for
    /// a clip of `frames` frames.
    pub fn preset(size: &str, dataset: Dataset, frames: usize) -> Result<Self> {
        let (depth, c0, uvg_c, mcl_c) = match size.to_ascii_lowercase().as_str() {
            "xxs" => (3, 136, None, Some(2)),
            "xs" => (3, 196, None, Some(4)),
            "s" => (3, 280, Some(2), Some(8)),
            "m" => (3, 400, Some(4), Some(16)),
            "l" => (3, 560, Some(8), Some(32)),
            "xl" => (4, 688, Some(16), None),
            "xxl" => (5, 864, Some(32), None),
            other => return Err(Error::config(format!("unknown model size {other:?}"))),
        };
        let grid_c = match dataset {
            Dataset::Uvg => uvg_c,
            Dataset::MclJcv | Dataset::Bunny => mcl_c,
        }
        .ok_or_else(|| {
            Error::config(format!("size {size:?} has no published {dataset:?} configuration"))
        })?;
        let (height, width, scales, patch) = match dataset {
            Dataset::Bunny => (720, 1280, vec![5, 2, 2, 2], 80),
            _ => (1080, 1920, vec![5, 3, 2, 2], 120),
        };
        let grid_t = if dataset == Dataset::Uvg { 150 } else { 40 };
        let cfg = Self {
            height,
            width,
            frames,
            patch_size: patch,
            depths: vec![depth, depth, depth, 1],
            scales,
            channels: c0,
            reduction: 2.0,
            kernel: 3,
            expansion: 4,
            last_expansion: 1,
            base_grid: BaseGridConfig {
                t: grid_t,
                h: 18,
                w: 32,
                c: grid_c,
                levels: 2,
            },
            local_grid: LocalGridConfig {
                t: frames,
                c: grid_c * 2,
                levels: 3,
            },
            hierarchical: true,
            paddings: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Roughly 100k-parameter model for 64x64 clips.
    pub fn tiny(frames: usize) -> Self {
        // Temporal levels halve the grid length; short clips get fewer.
        let max_levels = frames.max(1).ilog2() as usize + 1;
        Self {
            height: 64,
            width: 64,
            frames,
            patch_size: 32,
            depths: vec![2, 2, 1],
            scales: vec![2, 2, 2],
            channels: 56,
            reduction: 2.0,
            kernel: 3,
            expansion: 4,
            last_expansion: 1,
            base_grid: BaseGridConfig {
                t: frames,
                h: 8,
                w: 8,
                c: 8,
                levels: max_levels.min(2),
            },
            local_grid: LocalGridConfig {
                t: frames,
                c: 8,
                levels: max_levels.min(3),
            },
            hierarchical: true,
            paddings: None,
        }
    }

    pub fn blocks(&self) -> usize {
        self.depths.len()
    }

    /// `M_0`, the patch side at the stem.
    pub fn base_patch(&self) -> usize {
        self.patch_size / self.scales.iter().product::<usize>().max(1)
    }

    /// Patch side after stage `s` (0 = stem).
    pub fn stage_patch(&self, s: usize) -> usize {
        self.base_patch() * self.scales[..s].iter().product::<usize>()
    }

    /// Frame size `(height, width)` at stage `s`.
    pub fn stage_frame(&self, s: usize) -> (usize, usize) {
        let down: usize = self.scales[s..].iter().product();
        (self.height / down, self.width / down)
    }

    /// Width at stage `s`: `C_0` for the stem, `floor(C_0 / R^(n-1))` for block n.
    pub fn stage_channels(&self, s: usize) -> usize {
        reduce_width(self.channels, self.reduction, s.max(1))
    }

    pub fn expansion_of(&self, n: usize) -> usize {
        if n == self.blocks() {
            self.last_expansion
        } else {
            self.expansion
        }
    }

    /// Patches per frame as `(rows, cols)`.
    pub fn patch_grid(&self) -> (usize, usize) {
        (self.height / self.patch_size, self.width / self.patch_size)
    }

    /// Explicit paddings when given (checked against the minimum), else the
    /// minimum schedule.
    pub fn paddings(&self) -> Result<Vec<usize>> {
        let min = padding_schedule(&self.depths, &self.scales, self.kernel)?;
        match &self.paddings {
            None => Ok(min),
            Some(p) if p.len() != min.len() => Err(Error::config(format!(
                "paddings needs {} entries (stem + blocks), got {}",
                min.len(),
                p.len()
            ))),
            Some(p) => {
                if let Some(s) = (0..p.len()).find(|&s| p[s] < min[s]) {
                    return Err(Error::config(format!(
                        "padding {} at stage {s} is below the required {} (schedule {min:?})",
                        p[s], min[s]
                    )));
                }
                Ok(p.clone())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.depths.is_empty() || self.depths.len() != self.scales.len() {
            return bad(format!(
                "depths {:?} and scales {:?} must be non-empty and of equal length",
                self.depths, self.scales
            ));
        }
        if self.depths.contains(&0) || self.scales.contains(&0) {
            return bad("depths and scales must be positive".into());
        }
        if self.height == 0 || self.width == 0 || self.frames == 0 {
            return bad("frame size and count must be positive".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel));
        }
        if !(self.reduction >= 1.0 && self.reduction.is_finite()) {
            return bad(format!("reduction must be >= 1, got {}", self.reduction));
        }
        if self.expansion == 0 || self.last_expansion == 0 {
            return bad("expansion ratios must be positive".into());
        }
        let prod: usize = self.scales.iter().product();
        if self.patch_size == 0 || self.patch_size % prod != 0 {
            return bad(format!(
                "patch size {} must be a positive multiple of the total stride {prod}",
                self.patch_size
            ));
        }
        if self.height % self.patch_size != 0 || self.width % self.patch_size != 0 {
            return bad(format!(
                "frame {}x{} is not divisible into {}-pixel patches",
                self.height, self.width, self.patch_size
            ));
        }
        if (1..=self.blocks()).any(|n| self.stage_channels(n) == 0) {
            return bad(format!(
                "C_0 = {} with reduction {} leaves a block without channels",
                self.channels, self.reduction
            ));
        }
        self.base_grid.validate()?;
        if self.hierarchical {
            self.local_grid.validate()?;
        }
        self.paddings()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = &self.base_grid;
        let l = &self.local_grid;
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "depths = {}", join(&self.depths));
        let _ = writeln!(s, "scales = {}", join(&self.scales));
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "reduction = {}", self.reduction);
        let _ = writeln!(s, "kernel = {}", self.kernel);
        let _ = writeln!(s, "expansion = {}", self.expansion);
        let _ = writeln!(s, "last_expansion = {}", self.last_expansion);
        let _ = writeln!(s, "base_grid = {}", join(&[b.t, b.h, b.w, b.c]));
        let _ = writeln!(s, "base_levels = {}", b.levels);
        let _ = writeln!(s, "local_grid = {}", join(&[l.t, l.c]));
        let _ = writeln!(s, "local_levels = {}", l.levels);
        let _ = writeln!(s, "hierarchical = {}", self.hierarchical);
        if let Some(p) = &self.paddings {
            let _ = writeln!(s, "paddings = {}", join(p));
        }
        s
    }

    /// Read the model keys from `kv`. A `preset = <size>` key (optionally with
    /// `dataset = uvg|mcl-jcv|bunny`) supplies defaults; a `tiny` preset starts
    /// from [`ModelConfig::tiny`]. Individual keys override.
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let frames: Option<usize> = kv.get("frames")?;
        let preset: Option<String> = kv.get("preset")?;
        let dataset: Option<String> = kv.get("dataset")?;
        let mut cfg = match preset.as_deref() {
            Some("tiny") => Self::tiny(frames.unwrap_or(8)),
            Some(size) => {
                let ds = match dataset.as_deref().unwrap_or("uvg") {
                    "uvg" => Dataset::Uvg,
                    "mcl-jcv" | "mcljcv" => Dataset::MclJcv,
                    "bunny" => Dataset::Bunny,
                    d => return Err(Error::config(format!("unknown dataset {d:?}"))),
                };
                Self::preset(size, ds, frames.unwrap_or(600))?
            }
            None if dataset.is_some() => return Err(Error::config("dataset requires a preset")),
            None => {
                let cfg = Self::explicit(kv, frames)?;
                cfg.validate()?;
                return Ok(cfg);
            }
        };
        if let Some(v) = frames {
            cfg.frames = v;
        }
        if let Some(v) = kv.get("height")? {
            cfg.height = v;
        }
        if let Some(v) = kv.get("width")? {
            cfg.width = v;
        }
        if let Some(v) = kv.get("patch_size")? {
            cfg.patch_size = v;
        }
        if let Some(v) = kv.get_list("depths")? {
            cfg.depths = v;
        }
        if let Some(v) = kv.get_list("scales")? {
            cfg.scales = v;
        }
        if let Some(v) = kv.get("channels")? {
            cfg.channels = v;
        }
        if let Some(v) = kv.get("reduction")? {
            cfg.reduction = v;
        }
        if let Some(v) = kv.get("kernel")? {
            cfg.kernel = v;
        }
        if let Some(v) = kv.get("expansion")? {
            cfg.expansion = v;
        }
        if let Some(v) = kv.get("last_expansion")? {
            cfg.last_expansion = v;
        }
        if let Some(v) = kv.get("base_levels")? {
            cfg.base_grid.levels = v;
        }
        if let Some(v) = kv.get_list::<usize>("base_grid")? {
            cfg.base_grid = base_grid_from(&v, cfg.base_grid.levels)?;
        }
        if let Some(v) = kv.get("local_levels")? {
            cfg.local_grid.levels = v;
        }
        if let Some(v) = kv.get_list::<usize>("local_grid")? {
            cfg.local_grid = local_grid_from(&v, cfg.local_grid.levels)?;
        }
        if let Some(v) = kv.get("hierarchical")? {
            cfg.hierarchical = v;
        }
        if let Some(v) = kv.get_list("paddings")? {
            cfg.paddings = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn explicit(kv: &mut KeyValues, frames: Option<usize>) -> Result<Self> {
        let frames = frames.ok_or_else(|| Error::config("missing required key \"frames\""))?;
        let base_levels = kv.require("base_levels")?;
        let local_levels = kv.require("local_levels")?;
        Ok(Self {
            height: kv.require("height")?,
            width: kv.require("width")?,
            frames,
            patch_size: kv.require("patch_size")?,
            depths: kv.require_list("depths")?,
            scales: kv.require_list("scales")?,
            channels: kv.require("channels")?,
            reduction: kv.require("reduction")?,
            kernel: kv.get("kernel")?.unwrap_or(3),
            expansion: kv.get("expansion")?.unwrap_or(4),
            last_expansion: kv.get("last_expansion")?.unwrap_or(1),
            base_grid: base_grid_from(&kv.require_list("base_grid")?, base_levels)?,
            local_grid: local_grid_from(&kv.require_list("local_grid")?, local_levels)?,
            hierarchical: kv.get("hierarchical")?.unwrap_or(true),
            paddings: kv.get_list("paddings")?,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }
}

fn base_grid_from(v: &[usize], levels: usize) -> Result<BaseGridConfig> {
    match *v {
        [t, h, w, c] => Ok(BaseGridConfig { t, h, w, c, levels }),
        _ => Err(Error::config(format!("base_grid needs t,h,w,c; got {v:?}"))),
    }
}

fn local_grid_from(v: &[usize], levels: usize) -> Result<LocalGridConfig> {
    match *v {
        [t, c] => Ok(LocalGridConfig { t, c, levels }),
        _ => Err(Error::config(format!("local_grid needs t,c; got {v:?}"))),
    }
}

/// Minimum per-stage paddings (stem first, then each block) so that a padded
/// patch reproduces the frame-wise computation on its core.
///
/// Worked top-down: the head is per-pixel, every K×K convolution needs
/// `ceil((K-1)/2)` valid pixels on each side, and an upsample by `S` whose
/// output must be valid `p` pixels beyond the patch needs
/// `ceil((2p + S - 1) / 2S)` input pixels beyond it under half-pixel centres.
pub fn padding_schedule(depths: &[usize], scales: &[usize], kernel: usize) -> Result<Vec<usize>> {
    if depths.len() != scales.len() || scales.contains(&0) {
        return Err(Error::config(format!(
            "depths {depths:?} and scales {scales:?} must have equal length and positive scales"
        )));
    }
    let c = kernel.saturating_sub(1).div_ceil(2);
    let n = depths.len();
    let mut p = vec![0; n + 1];
    let mut need = 0;
    for s in (0..=n).rev() {
        let convs = if s == 0 { 1 } else { depths[s - 1] };
        p[s] = need + convs * c;
        if s > 0 {
            let sc = scales[s - 1];
            need = (2 * p[s] + sc - 1).div_ceil(2 * sc);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_padding_schedules() {
        let s = [5, 3, 2, 2];
        assert_eq!(padding_schedule(&[3, 3, 3, 1], &s, 3).unwrap(), vec![3, 6, 6, 4, 1]);
        assert_eq!(padding_schedule(&[4, 4, 4, 1], &s, 3).unwrap(), vec![3, 7, 7, 5, 1]);
        assert_eq!(padding_schedule(&[5, 5, 5, 1], &s, 3).unwrap(), vec![4, 9, 9, 6, 1]);
        // A single K=3 convolution alone.
        assert_eq!(padding_schedule(&[], &[], 3).unwrap(), vec![1]);
    }

    #[test]
    fn scale_s_progression() {
        let cfg = ModelConfig::preset("s", Dataset::Uvg, 600).unwrap();
        let widths: Vec<usize> = (1..=4).map(|n| cfg.stage_channels(n)).collect();
        assert_eq!(widths, vec![280, 140, 70, 35]);
        let sizes: Vec<usize> = (0..=4).map(|s| cfg.stage_patch(s)).collect();
        assert_eq!(sizes, vec![2, 10, 30, 60, 120]);
        assert_eq!(cfg.stage_frame(0), (18, 32));
        assert_eq!(cfg.patch_grid(), (9, 16));
    }

    #[test]
    fn text_round_trip_and_rejections() {
        let mut cfg = ModelConfig::tiny(8);
        cfg.paddings = Some(vec![5, 5, 3, 1]);
        let back = ModelConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert!(ModelConfig::parse(&(cfg.to_text() + "bogus = 1\n")).is_err());
        cfg.paddings = Some(vec![0, 0, 0, 0]);
        assert!(cfg.validate().is_err(), "insufficient padding");
        let mut cfg = ModelConfig::tiny(8);
        cfg.patch_size = 12;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn preset_overrides() {
        let cfg = ModelConfig::parse("preset = tiny\nframes = 4\nhierarchical = false").unwrap();
        assert_eq!(cfg.frames, 4);
        assert!(!cfg.hierarchical);
        assert!(ModelConfig::parse("preset = xl\ndataset = mcl-jcv").is_err());
        assert!(ModelConfig::parse("channels = 4").is_err());
    }
}

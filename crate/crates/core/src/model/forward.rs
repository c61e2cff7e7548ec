use super::config::{ModelConfig, NORM_EPS};
use super::HiNeRV;
use crate::error::{Error, Result};
use crate::grid::{base_encoding, hierarchical_encoding};
use crate::tensor::{Float, Graph, Region, Var};

/// What a forward pass produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Frame,
    /// Patch in column `i`, row `j` of the frame partition.
    Patch { i: usize, j: usize },
}

/// Rectangle computed at each stage (stem first), in that stage's frame
/// coordinates, plus the output core at the last stage.
pub fn stage_regions(cfg: &ModelConfig, paddings: &[usize], target: Target) -> Result<(Vec<Region>, Region)> {
    let stages = cfg.blocks() + 1;
    match target {
        Target::Frame => {
            let regions: Vec<Region> = (0..stages)
                .map(|s| {
                    let (h, w) = cfg.stage_frame(s);
                    Region::frame(h, w)
                })
                .collect();
            Ok((regions, Region::frame(cfg.height, cfg.width)))
        }
        Target::Patch { i, j } => {
            let (rows, cols) = cfg.patch_grid();
            if i >= cols || j >= rows {
                return Err(Error::usage(format!(
                    "patch (i={i}, j={j}) outside the {cols}x{rows} partition"
                )));
            }
            let span = |idx: usize, m: usize, p: usize, len: usize| {
                let lo = (idx * m).saturating_sub(p);
                let hi = ((idx + 1) * m + p).min(len);
                (lo, hi - lo)
            };
            let regions = (0..stages)
                .map(|s| {
                    let (h, w) = cfg.stage_frame(s);
                    let m = cfg.stage_patch(s);
                    let (y0, rh) = span(j, m, paddings[s], h);
                    let (x0, rw) = span(i, m, paddings[s], w);
                    Region::new(y0, x0, rh, rw)
                })
                .collect();
            let m = cfg.patch_size;
            Ok((regions, Region::new(j * m, i * m, m, m)))
        }
    }
}

impl HiNeRV {
    /// Record the forward pass for frame `t` on `g`, with parameters bound as
    /// `vars` (see [`HiNeRV::bind`]). Returns the `[h, w, 3]` output.
    pub fn forward<F: Float>(&self, g: &mut Graph<F>, vars: &[Var], t: usize, target: Target) -> Result<Var> {
        let cfg = &self.config;
        if t >= cfg.frames {
            return Err(Error::usage(format!("frame {t} outside clip of {} frames", cfg.frames)));
        }
        if vars.len() != self.specs.len() {
            return Err(Error::usage(format!(
                "{} bound parameters for a model with {}",
                vars.len(),
                self.specs.len()
            )));
        }
        let paddings = cfg.paddings()?;
        let (regions, core) = stage_regions(cfg, &paddings, target)?;
        let pad = cfg.kernel / 2;
        let lay = &self.layout;
        let pick = |idx: &[usize]| idx.iter().map(|&i| vars[i]).collect::<Vec<Var>>();

        let enc = base_encoding(g, &pick(&lay.base_grids), regions[0], t, cfg.stage_frame(0), cfg.frames)?;
        let mut x = g.conv2d(enc, vars[lay.stem.0], Some(vars[lay.stem.1]), 1, pad, 1)?;

        for (b, blk) in lay.blocks.iter().enumerate() {
            let n = b + 1;
            let scale = cfg.scales[b];
            let normed = g.layer_norm(x, vars[blk.norm.0], vars[blk.norm.1], NORM_EPS)?;
            x = g.resample(normed, regions[b], cfg.stage_frame(b), scale, regions[n])?;
            if let Some((w, bias)) = blk.enc {
                let grids = pick(&blk.local_grids);
                if let Some(e) = hierarchical_encoding(g, &grids, regions[n], t, scale, cfg.frames)? {
                    let e = g.linear(e, vars[w], Some(vars[bias]))?;
                    x = g.add(x, e)?;
                }
            }
            for layer in &blk.layers {
                let c = g.shape(x)[2];
                let h = g.conv2d(x, vars[layer.dw.0], Some(vars[layer.dw.1]), 1, pad, c)?;
                let h = g.layer_norm(h, vars[layer.norm.0], vars[layer.norm.1], NORM_EPS)?;
                let h = g.linear(h, vars[layer.pw1.0], Some(vars[layer.pw1.1]))?;
                let h = g.gelu(h);
                let h = g.linear(h, vars[layer.pw2.0], Some(vars[layer.pw2.1]))?;
                x = if layer.residual { g.add(x, h)? } else { h };
            }
        }

        let last = regions[cfg.blocks()];
        if last != core {
            x = g.crop(x, core.y0 - last.y0, core.x0 - last.x0, core.h, core.w)?;
        }
        let y = g.linear(x, vars[lay.head.0], Some(vars[lay.head.1]))?;
        Ok(g.sigmoid(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_regions_grow_by_padding_and_clip() {
        let cfg = ModelConfig::tiny(8);
        let p = cfg.paddings().unwrap();
        let (r, core) = stage_regions(&cfg, &p, Target::Patch { i: 1, j: 0 }).unwrap();
        assert_eq!(core, Region::new(0, 32, 32, 32));
        // Stem: 8x8 frame, 4-pixel patches.
        assert_eq!(r[0], Region::new(0, 4 - p[0], 4 + p[0], 4 + p[0]));
        let (_, cols) = cfg.patch_grid();
        assert!(stage_regions(&cfg, &p, Target::Patch { i: cols, j: 0 }).is_err());
    }
}

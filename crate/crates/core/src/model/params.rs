use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, OUT_CHANNELS};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Grid,
    ConvWeight,
    LinearWeight,
    Bias,
    NormScale,
    NormShift,
}

impl ParamKind {
    /// Conv and linear weights are the only pruning candidates.
    pub fn prunable(self) -> bool {
        matches!(self, Self::ConvWeight | Self::LinearWeight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
}

const INIT_STD: f64 = 0.02;
const GRID_INIT: f32 = 1e-2;

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn init(&self, rng: &mut impl Rng) -> Tensor<f32> {
        match self.kind {
            ParamKind::Grid => Tensor::from_fn(self.shape.clone(), |_| {
                rng.random_range(-GRID_INIT..=GRID_INIT)
            }),
            ParamKind::ConvWeight | ParamKind::LinearWeight => {
                let normal = Normal::new(0.0, INIT_STD).expect("valid std");
                Tensor::from_fn(self.shape.clone(), |_| loop {
                    let v: f64 = normal.sample(rng);
                    if v.abs() <= 2.0 * INIT_STD {
                        break v as f32;
                    }
                })
            }
            ParamKind::Bias | ParamKind::NormShift => Tensor::zeros(self.shape.clone()),
            ParamKind::NormScale => Tensor::full(self.shape.clone(), 1.0),
        }
    }
}

/// Indices into the parameter list.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub base_grids: Vec<usize>,
    pub stem: (usize, usize),
    pub blocks: Vec<BlockLayout>,
    pub head: (usize, usize),
}

#[derive(Clone, Debug)]
pub(crate) struct BlockLayout {
    /// Layer norm ahead of the upsample.
    pub norm: (usize, usize),
    pub enc: Option<(usize, usize)>,
    pub local_grids: Vec<usize>,
    pub layers: Vec<LayerLayout>,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerLayout {
    pub dw: (usize, usize),
    pub norm: (usize, usize),
    pub pw1: (usize, usize),
    pub pw2: (usize, usize),
    pub residual: bool,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, kind: ParamKind, shape: Vec<usize>) -> usize {
        self.specs.push(ParamSpec { name, kind, shape });
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, cout: usize, cin_per_group: usize, k: usize) -> (usize, usize) {
        let w = self.add(format!("{name}.weight"), ParamKind::ConvWeight, vec![cout, cin_per_group, k, k]);
        let b = self.add(format!("{name}.bias"), ParamKind::Bias, vec![cout]);
        (w, b)
    }

    fn linear(&mut self, name: &str, out: usize, inp: usize) -> (usize, usize) {
        let w = self.add(format!("{name}.weight"), ParamKind::LinearWeight, vec![out, inp]);
        let b = self.add(format!("{name}.bias"), ParamKind::Bias, vec![out]);
        (w, b)
    }

    fn norm(&mut self, name: &str, c: usize) -> (usize, usize) {
        let g = self.add(format!("{name}.gamma"), ParamKind::NormScale, vec![c]);
        let b = self.add(format!("{name}.beta"), ParamKind::NormShift, vec![c]);
        (g, b)
    }
}

/// Parameter specs in their fixed serialisation order: base grids by level,
/// stem, then per block (upsample norm, encoding projection, local grids by
/// level, ConvNeXt layers), then the head.
pub(crate) fn build(cfg: &ModelConfig) -> (Vec<ParamSpec>, Layout) {
    let mut b = Builder { specs: Vec::new() };
    let k = cfg.kernel;
    let base_grids = cfg
        .base_grid
        .shapes()
        .iter()
        .enumerate()
        .map(|(l, s)| b.add(format!("base_grid.{l}"), ParamKind::Grid, s.to_vec()))
        .collect();
    let stem = b.conv("stem", cfg.channels, cfg.base_grid.channels(), k);

    let mut blocks = Vec::with_capacity(cfg.blocks());
    for n in 1..=cfg.blocks() {
        let name = format!("block{n}");
        let cin = cfg.stage_channels(n - 1);
        let cout = cfg.stage_channels(n);
        let norm = b.norm(&format!("{name}.norm"), cin);
        let local_shapes = if cfg.hierarchical {
            cfg.local_grid.shapes(n, cfg.scales[n - 1], cfg.reduction)
        } else {
            Vec::new()
        };
        let local_c: usize = local_shapes.iter().map(|s| s[3]).sum();
        let enc = (local_c > 0).then(|| b.linear(&format!("{name}.enc"), cin, local_c));
        let local_grids = local_shapes
            .iter()
            .enumerate()
            .map(|(l, s)| b.add(format!("{name}.local_grid.{l}"), ParamKind::Grid, s.to_vec()))
            .collect();
        let hidden = cfg.expansion_of(n) * cout;
        let layers = (0..cfg.depths[n - 1])
            .map(|d| {
                let c_in = if d == 0 { cin } else { cout };
                let lname = format!("{name}.layer{d}");
                LayerLayout {
                    dw: b.conv(&format!("{lname}.dwconv"), c_in, 1, k),
                    norm: b.norm(&format!("{lname}.norm"), c_in),
                    pw1: b.linear(&format!("{lname}.pw1"), hidden, c_in),
                    pw2: b.linear(&format!("{lname}.pw2"), cout, hidden),
                    residual: c_in == cout,
                }
            })
            .collect();
        blocks.push(BlockLayout {
            norm,
            enc,
            local_grids,
            layers,
        });
    }
    let head = b.linear("head", OUT_CHANNELS, cfg.stage_channels(cfg.blocks()));
    (
        b.specs,
        Layout {
            base_grids,
            stem,
            blocks,
            head,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Dataset;

    #[test]
    fn shortcuts_only_where_widths_match() {
        let cfg = ModelConfig::preset("s", Dataset::Uvg, 600).unwrap();
        let (specs, layout) = build(&cfg);
        assert!(layout.blocks[0].layers.iter().all(|l| l.residual));
        for blk in &layout.blocks[1..] {
            assert!(!blk.layers[0].residual);
            assert!(blk.layers[1..].iter().all(|l| l.residual));
        }
        // floor(4 / 2^3) == 0: the last block has no encoding branch.
        assert!(layout.blocks[3].enc.is_none() && layout.blocks[3].local_grids.is_empty());
        assert_eq!(specs[layout.head.0].shape, vec![3, 35]);
        assert_eq!(specs[0].shape, vec![150, 18, 32, 2]);
    }

    #[test]
    fn hierarchical_toggle_removes_local_branch() {
        let mut cfg = ModelConfig::tiny(8);
        cfg.hierarchical = false;
        let (specs, layout) = build(&cfg);
        assert!(layout.blocks.iter().all(|b| b.enc.is_none() && b.local_grids.is_empty()));
        assert!(specs.iter().all(|s| !s.name.contains("local")));
    }

    #[test]
    fn init_follows_kind() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let w = ParamSpec {
            name: "w".into(),
            kind: ParamKind::LinearWeight,
            shape: vec![100, 100],
        }
        .init(&mut rng);
        assert!(w.data().iter().all(|v| v.abs() <= 0.04));
        let std = (w.data().iter().map(|v| (v * v) as f64).sum::<f64>() / 1e4).sqrt();
        assert!((0.012..0.02).contains(&std), "std {std}");
    }
}

//! The network: base grids + stem, upsampling blocks with hierarchical
//! encodings and ConvNeXt layers, and a per-pixel sigmoid head.
//!
//! Any output rectangle is computed from the matching rectangles of every
//! earlier stage, expressed in absolute frame coordinates and clipped to the
//! frame. A whole frame is just the largest rectangle; a patch uses its core
//! grown by the per-stage padding. Because interpolation and convolution see
//! the same absolute coordinates in both cases, every pixel of the patch core
//! is computed by the same arithmetic, in the same order, as in the frame.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{padding_schedule, Dataset, ModelConfig, NORM_EPS, OUT_CHANNELS};
pub use forward::{stage_regions, Target};
pub use params::{ParamKind, ParamSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::PatchCoord;
use crate::tensor::{Graph, Tensor, Var};
use params::Layout;

#[derive(Clone, Debug)]
pub struct HiNeRV {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    params: Vec<Tensor<f32>>,
    layout: Layout,
}

impl HiNeRV {
    /// Freshly initialised model. Each tensor draws from its own stream,
    /// keyed by name, so a tensor's initial values do not depend on which
    /// other tensors the configuration has.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = params::build(&config);
        let params = specs
            .iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(crc32fast::hash(s.name.as_bytes()) as u64);
                s.init(&mut rng)
            })
            .collect();
        Ok(Self {
            config,
            specs,
            params,
            layout,
        })
    }

    /// Model with the given parameter tensors (checked against the layout).
    pub fn from_params(config: ModelConfig, params: Vec<Tensor<f32>>) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = params::build(&config);
        if params.len() != specs.len() {
            return Err(Error::config(format!(
                "model needs {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if p.shape() != s.shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    s.name,
                    p.shape(),
                    s.shape
                )));
            }
        }
        Ok(Self {
            config,
            specs,
            params,
            layout,
        })
    }

    /// Parameter specs of `config` in serialisation order, without
    /// allocating any weights.
    pub fn layout_specs(config: &ModelConfig) -> Result<Vec<ParamSpec>> {
        config.validate()?;
        Ok(params::build(config).0)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Tensor<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Put every parameter on `g`, as trainable leaves or constants.
    pub fn bind<F: crate::tensor::Float>(&self, g: &mut Graph<F>, trainable: bool) -> Vec<Var> {
        self.bind_values(g, &self.params, trainable)
    }

    /// Like [`HiNeRV::bind`] but with substitute values (e.g. quantized
    /// weights), which must follow the model's layout.
    pub fn bind_values<F: crate::tensor::Float>(
        &self,
        g: &mut Graph<F>,
        values: &[Tensor<f32>],
        trainable: bool,
    ) -> Vec<Var> {
        values
            .iter()
            .map(|t| {
                let v = t.cast();
                if trainable {
                    g.param(v)
                } else {
                    g.constant(v)
                }
            })
            .collect()
    }

    /// `M x M x 3` pixels of one patch.
    pub fn forward_patch(&self, patch: PatchCoord) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let out = self.forward(&mut g, &vars, patch.t, Target::Patch { i: patch.i, j: patch.j })?;
        Ok(g.value(out).clone())
    }

    /// `H x W x 3` pixels of frame `t`.
    pub fn forward_frame(&self, t: usize) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let out = self.forward(&mut g, &vars, t, Target::Frame)?;
        Ok(g.value(out).clone())
    }

    /// Whole frame assembled from its patches.
    pub fn forward_frame_patchwise(&self, t: usize) -> Result<Tensor<f32>> {
        let (rows, cols) = self.config.patch_grid();
        let m = self.config.patch_size;
        let (h, w) = (self.config.height, self.config.width);
        let mut out = vec![0.0f32; h * w * OUT_CHANNELS];
        for j in 0..rows {
            for i in 0..cols {
                let p = self.forward_patch(PatchCoord::new(i, j, t))?;
                for (y, row) in p.data().chunks_exact(m * OUT_CHANNELS).enumerate() {
                    let at = ((j * m + y) * w + i * m) * OUT_CHANNELS;
                    out[at..at + row.len()].copy_from_slice(row);
                }
            }
        }
        Tensor::new(vec![h, w, OUT_CHANNELS], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_s_parameter_count_within_two_percent() {
        let cfg = ModelConfig::preset("s", Dataset::Uvg, 600).unwrap();
        let (specs, _) = params::build(&cfg);
        let n: usize = specs.iter().map(|s| s.shape.iter().product::<usize>()).sum();
        let rel = (n as f64 - 3.19e6).abs() / 3.19e6;
        assert!(rel < 0.02, "{n} params");
    }

    #[test]
    fn shared_tensors_initialise_alike_across_configs() {
        let mut flat = ModelConfig::tiny(8);
        flat.hierarchical = false;
        let a = HiNeRV::new(ModelConfig::tiny(8), 7).unwrap();
        let b = HiNeRV::new(flat, 7).unwrap();
        let names: std::collections::HashSet<_> = a.specs().iter().map(|s| &s.name).collect();
        assert_eq!(names.len(), a.specs().len(), "parameter names must be unique");
        let mut shared = 0;
        for (spec, p) in b.specs().iter().zip(b.params()) {
            let k = a.specs().iter().position(|s| s.name == spec.name).unwrap();
            assert_eq!(a.params()[k], *p, "{}", spec.name);
            shared += 1;
        }
        assert!(shared > 0 && shared < a.specs().len());
        assert_ne!(HiNeRV::new(ModelConfig::tiny(8), 8).unwrap().params(), a.params());
    }

    #[test]
    fn zero_head_gives_half_grey() {
        let mut m = HiNeRV::new(ModelConfig::tiny(4), 0).unwrap();
        let k = m.specs().len();
        for t in &mut m.params_mut()[k - 2..] {
            t.data_mut().fill(0.0);
        }
        let y = m.forward_frame(1).unwrap();
        assert_eq!(y.shape(), &[64, 64, 3]);
        assert!(y.data().iter().all(|&v| v == 0.5));
    }
}

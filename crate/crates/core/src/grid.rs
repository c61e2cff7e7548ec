//! Learned multi-resolution temporal feature grids.
//!
//! The base grids are indexed with frame-space pixel coordinates at the stem
//! resolution; the per-block local grids are indexed with pixel coordinates
//! taken modulo the block's upsampling factor. Both are sampled trilinearly
//! with the frame index as the third coordinate, and the levels are
//! concatenated along channels in ascending level order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Float, Graph, Region, Tensor, Var};

/// Spatial patch `(i, j)` of frame `t`; `i` indexes columns, `j` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchCoord {
    pub i: usize,
    pub j: usize,
    pub t: usize,
}

impl PatchCoord {
    pub fn new(i: usize, j: usize, t: usize) -> Self {
        Self { i, j, t }
    }
}

/// `(u_frame, v_frame)` of the pixel `(u_patch, v_patch)` of a patch whose
/// side is `m0` at the stem resolution. Offsets may be negative or exceed
/// `m0` when addressing padding.
pub fn frame_coords(patch: PatchCoord, m0: usize, u_patch: isize, v_patch: isize) -> (isize, isize) {
    (
        (patch.i * m0) as isize + u_patch,
        (patch.j * m0) as isize + v_patch,
    )
}

/// Position of a frame pixel inside its `scale x scale` cell.
pub fn local_coords(u_frame: isize, v_frame: isize, scale: usize) -> (usize, usize) {
    let s = scale.max(1) as isize;
    (u_frame.rem_euclid(s) as usize, v_frame.rem_euclid(s) as usize)
}

/// Map index `p` of an axis with `len` positions onto a grid axis with
/// `cells` nodes, aligning the end points with the first and last node.
pub fn grid_coordinate(p: f64, len: usize, cells: usize) -> f64 {
    if len > 1 && cells > 1 {
        p * (cells - 1) as f64 / (len - 1) as f64
    } else {
        cells.saturating_sub(1) as f64 / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BaseGridConfig {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub levels: usize,
}

impl BaseGridConfig {
    pub fn level_shape(&self, l: usize) -> [usize; 4] {
        [self.t >> l, self.h, self.w, self.c << l]
    }

    pub fn shapes(&self) -> Vec<[usize; 4]> {
        (0..self.levels).map(|l| self.level_shape(l)).collect()
    }

    /// Channels of the concatenated encoding.
    pub fn channels(&self) -> usize {
        self.shapes().iter().map(|s| s[3]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.h == 0 || self.w == 0 || self.c == 0 || self.levels == 0 {
            return Err(Error::config(format!("base grid fields must be positive: {self:?}")));
        }
        if self.t >> (self.levels - 1) == 0 {
            return Err(Error::config(format!(
                "base grid with {} frames cannot have {} temporal levels",
                self.t, self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalGridConfig {
    pub t: usize,
    pub c: usize,
    pub levels: usize,
}

impl LocalGridConfig {
    /// Level shapes for block `n` (1-based) with upsampling factor `scale`.
    /// Levels whose channel count rounds down to zero are omitted.
    pub fn shapes(&self, n: usize, scale: usize, reduction: f64) -> Vec<[usize; 4]> {
        let c = reduce_width(self.c, reduction, n);
        (0..self.levels)
            .map(|l| [self.t >> l, scale, scale, c << l])
            .filter(|s| s[3] > 0)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.levels == 0 {
            return Err(Error::config(format!("local grid fields must be positive: {self:?}")));
        }
        if self.t >> (self.levels - 1) == 0 {
            return Err(Error::config(format!(
                "local grid with {} frames cannot have {} temporal levels",
                self.t, self.levels
            )));
        }
        Ok(())
    }
}

/// `floor(width / reduction^(n-1))`.
pub fn reduce_width(width: usize, reduction: f64, n: usize) -> usize {
    let exp = n.saturating_sub(1) as i32;
    (width as f64 / reduction.powi(exp) + 1e-9).floor() as usize
}

/// Grid levels held as plain tensors (construction, shape audits).
#[derive(Clone, Debug)]
pub struct FeatureGridSet {
    pub levels: Vec<Tensor<f32>>,
}

impl FeatureGridSet {
    /// Uniform initialisation in `[-1e-2, 1e-2]`.
    pub fn init(shapes: &[[usize; 4]], rng: &mut impl Rng) -> Self {
        let levels = shapes
            .iter()
            .map(|s| Tensor::from_fn(s.to_vec(), |_| rng.random_range(-1e-2f32..=1e-2)))
            .collect();
        Self { levels }
    }

    pub fn channels(&self) -> usize {
        self.levels.iter().map(|t| t.shape()[3]).sum()
    }
}

/// Base encoding of every pixel of `region` (stem resolution) at frame `t`.
///
/// `frame` is the stem-resolution frame size and `frames` the video length.
pub fn base_encoding<F: Float>(
    g: &mut Graph<F>,
    grids: &[Var],
    region: Region,
    t: usize,
    frame: (usize, usize),
    frames: usize,
) -> Result<Var> {
    let mut parts = Vec::with_capacity(grids.len());
    for &grid in grids {
        let [gt, gh, gw, _] = grid_shape(g, grid)?;
        let tc = grid_coordinate(t as f64, frames, gt);
        let coords: Vec<[f64; 3]> = region_pixels(region)
            .map(|(v, u)| {
                [
                    tc,
                    grid_coordinate(v as f64, frame.0, gh),
                    grid_coordinate(u as f64, frame.1, gw),
                ]
            })
            .collect();
        parts.push(g.trilinear_sample(grid, &coords, &[region.h, region.w])?);
    }
    g.concat_channels(&parts)
}

/// Base encoding of the `m0 x m0` core of a patch.
pub fn base_encoding_patch<F: Float>(
    g: &mut Graph<F>,
    grids: &[Var],
    patch: PatchCoord,
    m0: usize,
    frame: (usize, usize),
    frames: usize,
) -> Result<Var> {
    let (u, v) = frame_coords(patch, m0, 0, 0);
    let region = Region::new(v as usize, u as usize, m0, m0);
    base_encoding(g, grids, region, patch.t, frame, frames)
}

/// Hierarchical encoding of every pixel of `region` at a block's output
/// resolution. Returns `None` when the block has no local grid channels.
pub fn hierarchical_encoding<F: Float>(
    g: &mut Graph<F>,
    grids: &[Var],
    region: Region,
    t: usize,
    scale: usize,
    frames: usize,
) -> Result<Option<Var>> {
    if grids.is_empty() {
        return Ok(None);
    }
    let mut parts = Vec::with_capacity(grids.len());
    for &grid in grids {
        let [gt, gh, gw, _] = grid_shape(g, grid)?;
        let tc = grid_coordinate(t as f64, frames, gt);
        let coords: Vec<[f64; 3]> = region_pixels(region)
            .map(|(v, u)| {
                let (ul, vl) = local_coords(u as isize, v as isize, scale);
                [
                    tc,
                    grid_coordinate(vl as f64, scale, gh),
                    grid_coordinate(ul as f64, scale, gw),
                ]
            })
            .collect();
        parts.push(g.trilinear_sample(grid, &coords, &[region.h, region.w])?);
    }
    g.concat_channels(&parts).map(Some)
}

fn grid_shape<F: Float>(g: &Graph<F>, grid: Var) -> Result<[usize; 4]> {
    match g.shape(grid) {
        &[t, h, w, c] => Ok([t, h, w, c]),
        s => Err(Error::config(format!("grid must be rank 4, got {s:?}"))),
    }
}

fn region_pixels(r: Region) -> impl Iterator<Item = (usize, usize)> {
    (r.y0..r.y0 + r.h).flat_map(move |v| (r.x0..r.x0 + r.w).map(move |u| (v, u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coordinate_formulas() {
        let p = |i, j| PatchCoord::new(i, j, 0);
        assert_eq!(frame_coords(p(0, 0), 2, 0, 0).0, 0);
        assert_eq!(frame_coords(p(2, 0), 2, 1, 0).0, 5);
        assert_eq!(frame_coords(p(0, 3), 2, 0, 0).1, 6);
        assert_eq!(local_coords(7, 0, 3), (1, 0));
        assert_eq!(local_coords(0, 0, 4), (0, 0));
        assert_eq!(local_coords(13, 9, 1), (0, 0));
        assert_eq!(local_coords(-1, -4, 3), (2, 2));
    }

    #[test]
    fn uvg_scale_s_base_grid_shapes() {
        let cfg = BaseGridConfig {
            t: 150,
            h: 18,
            w: 32,
            c: 2,
            levels: 2,
        };
        assert_eq!(cfg.shapes(), vec![[150, 18, 32, 2], [75, 18, 32, 4]]);
        assert_eq!(cfg.channels(), 6);
    }

    #[test]
    fn local_grid_shapes_follow_reduction() {
        let cfg = LocalGridConfig { t: 600, c: 4, levels: 3 };
        assert_eq!(
            cfg.shapes(1, 5, 2.0),
            vec![[600, 5, 5, 4], [300, 5, 5, 8], [150, 5, 5, 16]]
        );
        assert_eq!(cfg.shapes(2, 3, 2.0)[0], [600, 3, 3, 2]);
        assert_eq!(cfg.shapes(3, 2, 2.0)[2], [150, 2, 2, 4]);
        // floor(4 / 8) == 0: the fourth block carries no local grid.
        assert!(cfg.shapes(4, 2, 2.0).is_empty());
    }

    #[test]
    fn constant_grid_gives_constant_encoding() {
        let mut g = Graph::<f32>::new();
        let grid = g.constant(Tensor::full(vec![4, 3, 3, 2], 0.5));
        let enc = base_encoding(&mut g, &[grid], Region::frame(6, 6), 2, (6, 6), 8).unwrap();
        assert_eq!(g.shape(enc), &[6, 6, 2]);
        assert!(g.value(enc).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn node_aligned_pixels_read_exact_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = FeatureGridSet::init(&[[5, 4, 4, 3]], &mut rng);
        let mut g = Graph::<f32>::new();
        let grid = g.constant(set.levels[0].clone());
        // 9 frames onto 5 nodes: t = 4 lands on node 2; 4 pixels onto 4 nodes.
        let enc = base_encoding(&mut g, &[grid], Region::frame(4, 4), 4, (4, 4), 9).unwrap();
        let node = |t: usize, y: usize, x: usize| {
            set.levels[0].data()[((t * 4 + y) * 4 + x) * 3..][..3].to_vec()
        };
        assert_eq!(&g.value(enc).data()[(2 * 4 + 3) * 3..][..3], &node(2, 2, 3)[..]);
    }

    #[test]
    fn congruent_pixels_share_hierarchical_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = LocalGridConfig { t: 6, c: 4, levels: 3 };
        let set = FeatureGridSet::init(&cfg.shapes(1, 3, 2.0), &mut rng);
        let mut g = Graph::<f32>::new();
        let vars: Vec<Var> = set.levels.iter().map(|t| g.constant(t.clone())).collect();
        let enc = hierarchical_encoding(&mut g, &vars, Region::frame(9, 9), 3, 3, 6)
            .unwrap()
            .unwrap();
        let c = set.channels();
        assert_eq!(g.shape(enc), &[9, 9, c]);
        let px = |y: usize, x: usize| g.value(enc).data()[(y * 9 + x) * c..][..c].to_vec();
        assert_eq!(px(1, 2), px(4, 8));
        assert_eq!(px(0, 0), px(6, 3));
        assert_ne!(px(0, 0), px(0, 1));
    }

    #[test]
    fn zero_grids_give_zero_encoding() {
        let mut g = Graph::<f32>::new();
        let grid = g.constant(Tensor::zeros(vec![2, 2, 2, 4]));
        let enc = hierarchical_encoding(&mut g, &[grid], Region::new(3, 1, 4, 5), 1, 2, 2)
            .unwrap()
            .unwrap();
        assert!(g.value(enc).data().iter().all(|&v| v == 0.0));
        assert!(hierarchical_encoding(&mut g, &[], Region::frame(2, 2), 0, 2, 2)
            .unwrap()
            .is_none());
    }

    #[test]
    fn patch_encoding_is_crop_of_frame_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = BaseGridConfig { t: 4, h: 3, w: 5, c: 2, levels: 2 };
        let set = FeatureGridSet::init(&cfg.shapes(), &mut rng);
        let mut g = Graph::<f32>::new();
        let vars: Vec<Var> = set.levels.iter().map(|t| g.constant(t.clone())).collect();
        let full = base_encoding(&mut g, &vars, Region::frame(4, 6), 3, (4, 6), 7).unwrap();
        let patch = PatchCoord::new(2, 1, 3);
        let part = base_encoding_patch(&mut g, &vars, patch, 2, (4, 6), 7).unwrap();
        let expect = g.value(full).crop(2, 4, 2, 2).unwrap();
        assert_eq!(g.value(part), &expect);
    }
}

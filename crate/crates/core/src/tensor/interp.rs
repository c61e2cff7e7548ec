//! Bilinear resampling of feature maps and trilinear sampling of feature grids.
//!
//! Upsampling uses half-pixel centres: output pixel `d` at scale `s` reads the
//! source position `(d + 0.5) / s - 0.5`, clamped to the frame. Coordinates are
//! absolute within a stage's frame, so a padded patch and the whole frame
//! evaluate bit-identical interpolants for every pixel they share.

use super::graph::{Ctx, Op, Var};
use super::{Float, Graph, Tensor};
use crate::error::{Error, Result};

/// Axis-aligned rectangle of a stage's frame in that stage's pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
}

impl Region {
    pub fn new(y0: usize, x0: usize, h: usize, w: usize) -> Self {
        Self { y0, x0, h, w }
    }

    pub fn frame(h: usize, w: usize) -> Self {
        Self::new(0, 0, h, w)
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn contains(&self, other: &Region) -> bool {
        other.y0 >= self.y0
            && other.x0 >= self.x0
            && other.y0 + other.h <= self.y0 + self.h
            && other.x0 + other.w <= self.x0 + self.w
    }
}

/// Two-tap linear interpolation plan along one axis.
#[derive(Clone, Debug)]
pub struct AxisSampler {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
    in_len: usize,
}

impl AxisSampler {
    /// Plan for upsampling by `scale` from the input span starting at
    /// `in_origin` (length `in_len`) of a frame axis of length `frame_len` to
    /// the output span `[out_origin, out_origin + out_len)`.
    pub fn upsample(
        in_origin: usize,
        in_len: usize,
        frame_len: usize,
        scale: usize,
        out_origin: usize,
        out_len: usize,
    ) -> Result<Self> {
        if scale == 0 {
            return Err(Error::config("upsampling scale must be >= 1"));
        }
        if frame_len == 0 {
            return Err(Error::config("cannot upsample an empty axis"));
        }
        let mut lo = Vec::with_capacity(out_len);
        let mut hi = Vec::with_capacity(out_len);
        let mut frac = Vec::with_capacity(out_len);
        let max = (frame_len - 1) as f64;
        for d in out_origin..out_origin + out_len {
            let src = ((d as f64 + 0.5) / scale as f64 - 0.5).clamp(0.0, max);
            let l = src.floor();
            let f = src - l;
            let l = l as usize;
            let h = if f > 0.0 { l + 1 } else { l };
            if l < in_origin || h >= in_origin + in_len {
                return Err(Error::usage(format!(
                    "output position {d} needs source pixels {l}..={h}, input covers {}..{}",
                    in_origin,
                    in_origin + in_len
                )));
            }
            lo.push(l - in_origin);
            hi.push(h - in_origin);
            frac.push(f);
        }
        Ok(Self {
            lo,
            hi,
            frac,
            in_len,
        })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    fn taps<F: Float>(&self) -> Vec<(usize, usize, F, F)> {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(&self.frac)
            .map(|((&l, &h), &f)| (l, h, F::lit(1.0 - f), F::lit(f)))
            .collect()
    }
}

pub(crate) fn resample_forward<F: Float>(
    x: &Tensor<F>,
    rows: &AxisSampler,
    cols: &AxisSampler,
) -> Result<Tensor<F>> {
    let (h, w, c) = x.hwc()?;
    if rows.in_len != h || cols.in_len != w {
        return Err(Error::config(format!(
            "resample plan expects {}x{} input, got {h}x{w}",
            rows.in_len, cols.in_len
        )));
    }
    let (ho, wo) = (rows.len(), cols.len());
    let rt = rows.taps::<F>();
    let ct = cols.taps::<F>();
    let xd = x.data();
    let mut out = vec![F::zero(); ho * wo * c];
    for (oy, &(y0, y1, _, wy1)) in rt.iter().enumerate() {
        for (ox, &(x0, x1, _, wx1)) in ct.iter().enumerate() {
            let orow = &mut out[(oy * wo + ox) * c..][..c];
            let a = &xd[(y0 * w + x0) * c..][..c];
            let b = &xd[(y0 * w + x1) * c..][..c];
            let cc = &xd[(y1 * w + x0) * c..][..c];
            let d = &xd[(y1 * w + x1) * c..][..c];
            // Nested lerps reproduce constant neighbourhoods exactly.
            for i in 0..c {
                let top = a[i] + wx1 * (b[i] - a[i]);
                let bot = cc[i] + wx1 * (d[i] - cc[i]);
                orow[i] = top + wy1 * (bot - top);
            }
        }
    }
    Tensor::new(vec![ho, wo, c], out)
}

pub(crate) fn resample_backward<F: Float>(
    ctx: &mut Ctx<'_, F>,
    x: Var,
    rows: &AxisSampler,
    cols: &AxisSampler,
    gout: &[F],
) {
    if !ctx.wants(x) {
        return;
    }
    let shape = ctx.values[x.0].shape().to_vec();
    let (w, c) = (shape[1], shape[2]);
    let wo = cols.len();
    let rt = rows.taps::<F>();
    let ct = cols.taps::<F>();
    let gx = ctx.acc(x);
    for (oy, &(y0, y1, wy0, wy1)) in rt.iter().enumerate() {
        for (ox, &(x0, x1, wx0, wx1)) in ct.iter().enumerate() {
            let grow = &gout[(oy * wo + ox) * c..][..c];
            for (yy, xx, wt) in [
                (y0, x0, wy0 * wx0),
                (y0, x1, wy0 * wx1),
                (y1, x0, wy1 * wx0),
                (y1, x1, wy1 * wx1),
            ] {
                let dst = &mut gx[(yy * w + xx) * c..][..c];
                for (d, &g) in dst.iter_mut().zip(grow) {
                    *d += wt * g;
                }
            }
        }
    }
}

/// Corner indices and fractional offsets of one trilinear lookup.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TriSample {
    t: [usize; 2],
    y: [usize; 2],
    x: [usize; 2],
    f: [f64; 3],
}

impl TriSample {
    fn new(coord: [f64; 3], dims: [usize; 3]) -> Self {
        let axis = |v: f64, n: usize| -> ([usize; 2], f64) {
            let max = n.saturating_sub(1) as f64;
            let v = if v.is_finite() { v.clamp(0.0, max) } else { 0.0 };
            let l = v.floor();
            let f = v - l;
            let l = l as usize;
            ([l, if f > 0.0 { l + 1 } else { l }], f)
        };
        let (t, ft) = axis(coord[0], dims[0]);
        let (y, fy) = axis(coord[1], dims[1]);
        let (x, fx) = axis(coord[2], dims[2]);
        Self {
            t,
            y,
            x,
            f: [ft, fy, fx],
        }
    }

    /// The eight (offset-in-cells, weight) pairs in a fixed order.
    fn corners<F: Float>(&self, dims: [usize; 3]) -> [(usize, F); 8] {
        let [ft, fy, fx] = self.f;
        let wt = [1.0 - ft, ft];
        let wy = [1.0 - fy, fy];
        let wx = [1.0 - fx, fx];
        let mut out = [(0, F::zero()); 8];
        let mut k = 0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let cell = (self.t[a] * dims[1] + self.y[b]) * dims[2] + self.x[c];
                    let w = F::lit(wt[a]) * F::lit(wy[b]) * F::lit(wx[c]);
                    out[k] = (cell, w);
                    k += 1;
                }
            }
        }
        out
    }
}

fn grid_dims(shape: &[usize]) -> Result<([usize; 3], usize)> {
    match shape[..] {
        [t, h, w, c] if t > 0 && h > 0 && w > 0 => Ok(([t, h, w], c)),
        _ => Err(Error::config(format!(
            "feature grid must be a non-empty [t, h, w, c] tensor, got {shape:?}"
        ))),
    }
}

pub(crate) fn trilinear_backward<F: Float>(
    ctx: &mut Ctx<'_, F>,
    grid: Var,
    samples: &[TriSample],
    gout: &[F],
) {
    if !ctx.wants(grid) {
        return;
    }
    let (dims, c) = grid_dims(ctx.values[grid.0].shape()).expect("validated in forward");
    if c == 0 {
        return;
    }
    let gg = ctx.acc(grid);
    for (s, grow) in samples.iter().zip(gout.chunks_exact(c)) {
        for (cell, w) in s.corners::<F>(dims) {
            for (d, &g) in gg[cell * c..][..c].iter_mut().zip(grow) {
                *d += w * g;
            }
        }
    }
}

impl<F: Float> Graph<F> {
    /// Bilinear upsampling of a whole map by an integer factor.
    pub fn bilinear_upsample(&mut self, x: Var, scale: usize) -> Result<Var> {
        let (h, w, _) = self.value(x).hwc()?;
        if scale < 1 {
            return Err(Error::config("upsampling scale must be >= 1"));
        }
        self.resample(x, Region::frame(h, w), (h, w), scale, Region::frame(h * scale, w * scale))
    }

    /// Upsample the part of a frame held in `x` (covering `input`) and return
    /// the `output` region of the upsampled frame.
    pub fn resample(
        &mut self,
        x: Var,
        input: Region,
        frame: (usize, usize),
        scale: usize,
        output: Region,
    ) -> Result<Var> {
        let rows = AxisSampler::upsample(input.y0, input.h, frame.0, scale, output.y0, output.h)?;
        let cols = AxisSampler::upsample(input.x0, input.w, frame.1, scale, output.x0, output.w)?;
        let out = resample_forward(self.value(x), &rows, &cols)?;
        Ok(self.push(out, Op::Resample { x, rows, cols }))
    }

    /// Sample a `[t, h, w, c]` grid at continuous `(t, y, x)` coordinates
    /// (clamped to the grid). The result has shape `lead ++ [c]`.
    pub fn trilinear_sample(&mut self, grid: Var, coords: &[[f64; 3]], lead: &[usize]) -> Result<Var> {
        let (dims, c) = grid_dims(self.value(grid).shape())?;
        if lead.iter().product::<usize>() != coords.len() {
            return Err(Error::config(format!(
                "{} coordinates cannot fill output shape {lead:?}",
                coords.len()
            )));
        }
        let samples: Vec<TriSample> = coords.iter().map(|&p| TriSample::new(p, dims)).collect();
        let gd = self.value(grid).data();
        let mut out = vec![F::zero(); coords.len() * c];
        // Nested lerps (x, then y, then t) keep constant grids exact.
        for (s, orow) in samples.iter().zip(out.chunks_exact_mut(c.max(1))) {
            let cells = s.corners::<F>(dims).map(|(cell, _)| &gd[cell * c..][..c]);
            let [ft, fy, fx] = s.f.map(F::lit);
            for (k, o) in orow.iter_mut().enumerate() {
                let lx = |i: usize| cells[i][k] + fx * (cells[i + 1][k] - cells[i][k]);
                let (a0, a1, b0, b1) = (lx(0), lx(2), lx(4), lx(6));
                let a = a0 + fy * (a1 - a0);
                let b = b0 + fy * (b1 - b0);
                *o = a + ft * (b - a);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(c);
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Trilinear { grid, samples }))
    }
}

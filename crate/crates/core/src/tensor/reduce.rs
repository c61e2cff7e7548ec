use super::graph::{Ctx, Op, Var};
use super::{Float, Graph, Tensor};
use crate::error::Result;

pub(crate) fn sum_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, scale: F, gout: &[F]) {
    if ctx.wants(x) {
        let g = gout[0] * scale;
        for d in ctx.acc(x) {
            *d += g;
        }
    }
}

pub(crate) fn mean_spatial_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, gout: &[F]) {
    if !ctx.wants(x) {
        return;
    }
    let c = gout.len();
    let n = ctx.values[x.0].len() / c.max(1);
    let inv = F::lit(1.0 / n.max(1) as f64);
    for row in ctx.acc(x).chunks_exact_mut(c.max(1)) {
        for (d, &g) in row.iter_mut().zip(gout) {
            *d += g * inv;
        }
    }
}

pub(crate) fn avg_pool2_backward<F: Float>(
    ctx: &mut Ctx<'_, F>,
    x: Var,
    out_shape: &[usize],
    gout: &[F],
) {
    if !ctx.wants(x) {
        return;
    }
    let w = ctx.values[x.0].shape()[1];
    let (ho, wo, c) = (out_shape[0], out_shape[1], out_shape[2]);
    let q = F::lit(0.25);
    let gx = ctx.acc(x);
    for oy in 0..ho {
        for ox in 0..wo {
            let grow = &gout[(oy * wo + ox) * c..][..c];
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let dst = &mut gx[((2 * oy + dy) * w + 2 * ox + dx) * c..][..c];
                for (d, &g) in dst.iter_mut().zip(grow) {
                    *d += q * g;
                }
            }
        }
    }
}

impl<F: Float> Graph<F> {
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        self.push(Tensor::scalar(F::lit(s)), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: f64 = v.data().iter().map(|v| v.as_f64()).sum();
        let m = s / v.len().max(1) as f64;
        self.push(Tensor::scalar(F::lit(m)), Op::Mean(x))
    }

    /// Per-channel mean over all pixels: `[h, w, c] -> [c]`.
    pub fn mean_spatial(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = self.value(x).hwc()?;
        let mut acc = vec![0.0f64; c];
        for row in self.value(x).data().chunks_exact(c.max(1)) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v.as_f64();
            }
        }
        let n = (h * w).max(1) as f64;
        let out = Tensor::new(vec![c], acc.iter().map(|&a| F::lit(a / n)).collect())?;
        Ok(self.push(out, Op::MeanSpatial(x)))
    }

    /// 2x2 average pooling with stride 2; a trailing odd row/column is dropped.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = self.value(x).hwc()?;
        let (ho, wo) = (h / 2, w / 2);
        let xd = self.value(x).data();
        let q = F::lit(0.25);
        let mut out = vec![F::zero(); ho * wo * c];
        for oy in 0..ho {
            for ox in 0..wo {
                let orow = &mut out[(oy * wo + ox) * c..][..c];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let src = &xd[((2 * oy + dy) * w + 2 * ox + dx) * c..][..c];
                    for (o, &v) in orow.iter_mut().zip(src) {
                        *o += v;
                    }
                }
                for o in orow.iter_mut() {
                    *o *= q;
                }
            }
        }
        let out = Tensor::new(vec![ho, wo, c], out)?;
        Ok(self.push(out, Op::AvgPool2(x)))
    }
}

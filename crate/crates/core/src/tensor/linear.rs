//! Per-pixel affine map over the last (channel) dimension.

use super::gemm::{gemm_acc, Mat};
use super::graph::{Ctx, Op, Var};
use super::{shape_err, Float, Graph, Tensor};
use crate::error::Result;

fn dims(xs: &[usize], ws: &[usize], bias: Option<usize>) -> Result<(usize, usize, usize)> {
    let err = |d: String| shape_err("linear", d);
    let [out_dim, in_dim] = ws[..] else {
        return Err(err(format!("weight must be [out, in], got {ws:?}")));
    };
    let Some(&last) = xs.last() else {
        return Err(err("input must have at least one dimension".into()));
    };
    if last != in_dim {
        return Err(err(format!(
            "input last dim {last} does not match weight in-dim {in_dim}"
        )));
    }
    if let Some(n) = bias {
        if n != out_dim {
            return Err(err(format!("bias has {n} entries for out-dim {out_dim}")));
        }
    }
    let rows = if in_dim == 0 {
        xs[..xs.len() - 1].iter().product()
    } else {
        xs.iter().product::<usize>() / in_dim
    };
    Ok((rows, in_dim, out_dim))
}

/// `w` transposed to `[in][out]`.
fn transpose<F: Float>(w: &[F], out_dim: usize, in_dim: usize) -> Vec<F> {
    let mut wt = vec![F::zero(); w.len()];
    for o in 0..out_dim {
        for k in 0..in_dim {
            wt[k * out_dim + o] = w[o * in_dim + k];
        }
    }
    wt
}

pub(crate) fn forward<F: Float>(x: &Tensor<F>, w: &Tensor<F>, b: Option<&Tensor<F>>) -> Result<Tensor<F>> {
    let (rows, in_dim, out_dim) = dims(x.shape(), w.shape(), b.map(|b| b.len()))?;
    let wt = transpose(w.data(), out_dim, in_dim);
    let mut out = vec![F::zero(); rows * out_dim];
    if let Some(b) = b {
        for orow in out.chunks_exact_mut(out_dim.max(1)) {
            orow.copy_from_slice(b.data());
        }
    }
    gemm_acc(rows, out_dim, in_dim, Mat::rows(x.data(), in_dim), &wt, &mut out);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_dim;
    Tensor::new(shape, out)
}

pub(crate) fn backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, w: Var, b: Option<Var>, gout: &[F]) {
    let (rows, in_dim, out_dim) =
        dims(ctx.values[x.0].shape(), ctx.values[w.0].shape(), None).expect("validated in forward");
    if out_dim == 0 {
        return;
    }
    if let Some(b) = b.filter(|b| ctx.wants(*b)) {
        let gb = ctx.acc(b);
        for grow in gout.chunks_exact(out_dim) {
            for (d, &v) in gb.iter_mut().zip(grow) {
                *d += v;
            }
        }
    }
    if in_dim == 0 {
        return;
    }
    if ctx.wants(x) {
        let (gx, wd) = ctx.acc_with(x, w);
        gemm_acc(rows, in_dim, out_dim, Mat::rows(gout, out_dim), wd, gx);
    }
    if ctx.wants(w) {
        let (gw, xd) = ctx.acc_with(w, x);
        gemm_acc(out_dim, in_dim, rows, Mat::transposed(gout, out_dim), xd, gw);
    }
}

impl<F: Float> Graph<F> {
    /// `y = x W^T + b` applied independently to every pixel; `w` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = forward(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(out, Op::Linear { x, w, b }))
    }
}

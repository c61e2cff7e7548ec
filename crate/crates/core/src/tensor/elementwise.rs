use super::graph::{Ctx, Op, Var};
use super::{shape_err, Float, Graph, Tensor};
use crate::error::Result;

fn same_shape<F: Float>(g: &Graph<F>, a: Var, b: Var, what: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(shape_err(
            what,
            format!("operand shapes {:?} and {:?} differ", g.shape(a), g.shape(b)),
        ));
    }
    Ok(())
}

fn accumulate<F: Float>(ctx: &mut Ctx<'_, F>, v: Var, gout: &[F], scale: F) {
    if ctx.wants(v) {
        for (d, &g) in ctx.acc(v).iter_mut().zip(gout) {
            *d += scale * g;
        }
    }
}

pub(crate) fn add_backward<F: Float>(ctx: &mut Ctx<'_, F>, a: Var, b: Var, gout: &[F]) {
    accumulate(ctx, a, gout, F::one());
    accumulate(ctx, b, gout, F::one());
}

pub(crate) fn sub_backward<F: Float>(ctx: &mut Ctx<'_, F>, a: Var, b: Var, gout: &[F]) {
    accumulate(ctx, a, gout, F::one());
    accumulate(ctx, b, gout, -F::one());
}

pub(crate) fn scale_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, s: F, gout: &[F]) {
    accumulate(ctx, x, gout, s);
}

pub(crate) fn mul_backward<F: Float>(ctx: &mut Ctx<'_, F>, a: Var, b: Var, gout: &[F]) {
    for (dst, other) in [(a, b), (b, a)] {
        if ctx.wants(dst) {
            let (gd, ov) = ctx.acc_with(dst, other);
            for ((d, &o), &g) in gd.iter_mut().zip(ov).zip(gout) {
                *d += g * o;
            }
        }
    }
}

pub(crate) fn div_backward<F: Float>(ctx: &mut Ctx<'_, F>, a: Var, b: Var, out: &[F], gout: &[F]) {
    if ctx.wants(a) {
        let (ga, bv) = ctx.acc_with(a, b);
        for ((d, &bb), &g) in ga.iter_mut().zip(bv).zip(gout) {
            *d += g / bb;
        }
    }
    if ctx.wants(b) {
        let (gb, bv) = ctx.acc_with(b, b);
        for (((d, &bb), &q), &g) in gb.iter_mut().zip(bv).zip(out).zip(gout) {
            *d -= g * q / bb;
        }
    }
}

pub(crate) fn mul_const_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, c: &[F], gout: &[F]) {
    if ctx.wants(x) {
        for ((d, &k), &g) in ctx.acc(x).iter_mut().zip(c).zip(gout) {
            *d += g * k;
        }
    }
}

pub(crate) fn abs_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, gout: &[F]) {
    if ctx.wants(x) {
        let (gx, xv) = ctx.acc_with(x, x);
        for ((d, &v), &g) in gx.iter_mut().zip(xv).zip(gout) {
            if v > F::zero() {
                *d += g;
            } else if v < F::zero() {
                *d -= g;
            }
        }
    }
}

pub(crate) fn pow_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, p: F, gout: &[F]) {
    if ctx.wants(x) {
        let (gx, xv) = ctx.acc_with(x, x);
        for ((d, &v), &g) in gx.iter_mut().zip(xv).zip(gout) {
            *d += g * p * v.powf(p - F::one());
        }
    }
}

pub(crate) fn concat_backward<F: Float>(ctx: &mut Ctx<'_, F>, parts: &[Var], gout: &[F]) {
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| *ctx.values[p.0].shape().last().unwrap())
        .collect();
    let total: usize = widths.iter().sum();
    if total == 0 {
        return;
    }
    let mut off = 0;
    for (&p, &w) in parts.iter().zip(&widths) {
        if ctx.wants(p) && w > 0 {
            let gp = ctx.acc(p);
            for (dst, src) in gp.chunks_exact_mut(w).zip(gout.chunks_exact(total)) {
                for (d, &g) in dst.iter_mut().zip(&src[off..off + w]) {
                    *d += g;
                }
            }
        }
        off += w;
    }
}

pub(crate) fn crop_backward<F: Float>(
    ctx: &mut Ctx<'_, F>,
    x: Var,
    y0: usize,
    x0: usize,
    out_shape: &[usize],
    gout: &[F],
) {
    if !ctx.wants(x) {
        return;
    }
    let sw = ctx.values[x.0].shape()[1];
    let (h, w, c) = (out_shape[0], out_shape[1], out_shape[2]);
    let gx = ctx.acc(x);
    for y in 0..h {
        let dst = &mut gx[((y0 + y) * sw + x0) * c..][..w * c];
        for (d, &g) in dst.iter_mut().zip(&gout[y * w * c..][..w * c]) {
            *d += g;
        }
    }
}

impl<F: Float> Graph<F> {
    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(F, F) -> F, op: Op<F>) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        self.push(out, op)
    }

    fn map(&mut self, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect())
            .expect("same shape");
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        Ok(self.zip_map(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        Ok(self.zip_map(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        Ok(self.zip_map(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "div")?;
        Ok(self.zip_map(a, b, |x, y| x / y, Op::Div(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = F::lit(s);
        self.map(x, move |a| a * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let s = F::lit(s);
        self.map(x, move |a| a + s, Op::AddScalar(x))
    }

    /// Elementwise product with a constant array of the same shape (e.g. a mask).
    pub fn mul_const(&mut self, x: Var, c: Vec<F>) -> Result<Var> {
        if c.len() != self.value(x).len() {
            return Err(shape_err(
                "mul_const",
                format!("{} factors for {} elements", c.len(), self.value(x).len()),
            ));
        }
        let v = self.value(x);
        let data = v.data().iter().zip(&c).map(|(&a, &k)| a * k).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(out, Op::MulConst(x, c)))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, |a| a.abs(), Op::Abs(x))
    }

    pub fn pow_scalar(&mut self, x: Var, p: f64) -> Var {
        let p = F::lit(p);
        self.map(x, move |a| a.powf(p), Op::PowScalar(x, p))
    }

    /// Concatenate maps along their last dimension, in argument order.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let lead = {
            let s = self.shape(first);
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(shape_err(
                    "concat",
                    format!("leading dims {:?} differ from {lead:?}", &s[..s.len() - 1]),
                ));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..][..w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn crop(&mut self, x: Var, y0: usize, x0: usize, h: usize, w: usize) -> Result<Var> {
        let out = self.value(x).crop(y0, x0, h, w)?;
        Ok(self.push(out, Op::Crop { x, y0, x0 }))
    }
}

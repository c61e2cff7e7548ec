//! Grouped 2-d convolution over channel-last maps with zero padding.

use super::graph::{Ctx, Op, Var};
use super::{shape_err, Float, Graph, Tensor};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    ho: usize,
    wo: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ipg: usize,
    opg: usize,
}

impl Geometry {
    fn new(
        xs: &[usize],
        ws: &[usize],
        bias_len: Option<usize>,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Result<Self> {
        let err = |d: String| shape_err("conv2d", d);
        let [h, w, cin] = xs[..] else {
            return Err(err(format!("input must be [h, w, c], got {xs:?}")));
        };
        let [cout, ipg, k, k2] = ws[..] else {
            return Err(err(format!("weight must be [out, in/groups, k, k], got {ws:?}")));
        };
        if groups == 0 || stride == 0 {
            return Err(err(format!("groups={groups} and stride={stride} must be >= 1")));
        }
        if k != k2 || k == 0 {
            return Err(err(format!("kernel must be square and non-empty, got {k}x{k2}")));
        }
        if cin % groups != 0 || cout % groups != 0 {
            return Err(err(format!(
                "channels in={cin} out={cout} not divisible by groups={groups}"
            )));
        }
        if ipg != cin / groups {
            return Err(err(format!(
                "weight expects {ipg} input channels per group, input gives {}",
                cin / groups
            )));
        }
        if let Some(n) = bias_len {
            if n != cout {
                return Err(err(format!("bias has {n} entries for {cout} output channels")));
            }
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(err(format!(
                "input {h}x{w} with padding {pad} is smaller than kernel {k}"
            )));
        }
        Ok(Self {
            h,
            w,
            cin,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
            cout,
            k,
            stride,
            pad,
            ipg,
            opg: cout / groups,
        })
    }

    fn depthwise(&self) -> bool {
        self.ipg == 1 && self.opg == 1
    }

    /// Source index along one axis, or `None` when it falls in the zero padding.
    #[inline]
    fn src(&self, o: usize, tap: usize, size: usize) -> Option<usize> {
        let i = (o * self.stride + tap) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < size).then_some(i as usize)
    }

    /// Weight rearranged to `[tap][in_channel][out_in_group]`.
    fn tap_major<F: Float>(&self, w: &[F]) -> Vec<F> {
        let kk = self.k * self.k;
        let mut wt = vec![F::zero(); kk * self.cin * self.opg];
        for oc in 0..self.cout {
            let g = oc / self.opg;
            let o = oc % self.opg;
            for ci in 0..self.ipg {
                let c = g * self.ipg + ci;
                for tap in 0..kk {
                    wt[(tap * self.cin + c) * self.opg + o] = w[(oc * self.ipg + ci) * kk + tap];
                }
            }
        }
        wt
    }

    fn add_from_tap_major<F: Float>(&self, dst: &mut [F], wt: &[F]) {
        let kk = self.k * self.k;
        for oc in 0..self.cout {
            let g = oc / self.opg;
            let o = oc % self.opg;
            for ci in 0..self.ipg {
                let c = g * self.ipg + ci;
                for tap in 0..kk {
                    dst[(oc * self.ipg + ci) * kk + tap] += wt[(tap * self.cin + c) * self.opg + o];
                }
            }
        }
    }

    /// Output columns `[lo, hi)` whose tap `kx` lands inside the input (stride 1).
    #[inline]
    fn cols(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = self.wo.min((self.w + self.pad).saturating_sub(kx));
        (lo, hi.max(lo))
    }

    /// Row-contiguous kernels for depthwise, stride-1 convolutions: every
    /// tap is applied to a whole output row at once, which vectorises over
    /// `columns × channels` even when there are only a few channels. Each
    /// output element still sums its taps in ascending order.
    fn rowwise(&self) -> bool {
        self.depthwise() && self.stride == 1
    }

    /// Tap weights repeated across one output row: `[tap][wo][c]`.
    fn tiled<F: Float>(&self, w: &[F]) -> Vec<F> {
        let (kk, c) = (self.k * self.k, self.cin);
        let mut out = Vec::with_capacity(kk * self.wo * c);
        for tap in 0..kk {
            for _ in 0..self.wo {
                out.extend((0..c).map(|ch| w[ch * kk + tap]));
            }
        }
        out
    }
}

/// Dot product with eight interleaved partial sums (a fixed order, so
/// still deterministic) to let the compiler vectorise it.
#[inline]
fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    acc.iter().fold(s, |t, &v| t + v)
}

pub(crate) fn forward<F: Float>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: Option<&Tensor<F>>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Result<Tensor<F>> {
    let g = Geometry::new(x.shape(), w.shape(), b.map(|b| b.len()), stride, pad, groups)?;
    if g.rowwise() {
        return Ok(forward_rowwise(&g, x.data(), w.data(), b.map(|b| b.data())));
    }
    let wt = g.tap_major(w.data());
    let xd = x.data();
    let mut out = vec![F::zero(); g.ho * g.wo * g.cout];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let orow = &mut out[(oy * g.wo + ox) * g.cout..][..g.cout];
            if let Some(b) = b {
                orow.copy_from_slice(b.data());
            }
            for ky in 0..g.k {
                let Some(iy) = g.src(oy, ky, g.h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = g.src(ox, kx, g.w) else { continue };
                    let xrow = &xd[(iy * g.w + ix) * g.cin..][..g.cin];
                    let wtap = &wt[(ky * g.k + kx) * g.cin * g.opg..][..g.cin * g.opg];
                    if g.depthwise() {
                        for ((o, &xv), &wv) in orow.iter_mut().zip(xrow).zip(wtap) {
                            *o += xv * wv;
                        }
                    } else {
                        for (c, &xv) in xrow.iter().enumerate() {
                            let grp = c / g.ipg;
                            let oseg = &mut orow[grp * g.opg..][..g.opg];
                            for (o, &wv) in oseg.iter_mut().zip(&wtap[c * g.opg..][..g.opg]) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.ho, g.wo, g.cout], out)
}

fn forward_rowwise<F: Float>(g: &Geometry, xd: &[F], w: &[F], b: Option<&[F]>) -> Tensor<F> {
    let c = g.cin;
    let mut out = match b {
        Some(b) => b.repeat(g.ho * g.wo),
        None => vec![F::zero(); g.ho * g.wo * c],
    };
    let tiled = g.tiled(w);
    for ky in 0..g.k {
        for kx in 0..g.k {
            let (lo, hi) = g.cols(kx);
            let len = (hi - lo) * c;
            let wrow = &tiled[((ky * g.k + kx) * g.wo + lo) * c..][..len];
            for oy in 0..g.ho {
                let Some(iy) = g.src(oy, ky, g.h) else { continue };
                let ix = lo + kx - g.pad;
                let orow = &mut out[(oy * g.wo + lo) * c..][..len];
                let xrow = &xd[(iy * g.w + ix) * c..][..len];
                for ((o, &xv), &wv) in orow.iter_mut().zip(xrow).zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![g.ho, g.wo, c], out).expect("conv output shape")
}

fn backward_rowwise<F: Float>(ctx: &mut Ctx<'_, F>, g: &Geometry, x: Var, w: Var, gout: &[F]) {
    let c = g.cin;
    if ctx.wants(x) {
        let tiled = g.tiled(ctx.val(w));
        let gx = ctx.acc(x);
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi) = g.cols(kx);
                let len = (hi - lo) * c;
                let wrow = &tiled[((ky * g.k + kx) * g.wo + lo) * c..][..len];
                for oy in 0..g.ho {
                    let Some(iy) = g.src(oy, ky, g.h) else { continue };
                    let ix = lo + kx - g.pad;
                    let grow = &gout[(oy * g.wo + lo) * c..][..len];
                    let xg = &mut gx[(iy * g.w + ix) * c..][..len];
                    for ((d, &gv), &wv) in xg.iter_mut().zip(grow).zip(wrow) {
                        *d += gv * wv;
                    }
                }
            }
        }
    }
    if ctx.wants(w) {
        let kk = g.k * g.k;
        let xd = ctx.val(x);
        let mut gw = vec![F::zero(); c * kk];
        let mut acc = vec![F::zero(); g.wo * c];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi) = g.cols(kx);
                let len = (hi - lo) * c;
                acc.fill(F::zero());
                for oy in 0..g.ho {
                    let Some(iy) = g.src(oy, ky, g.h) else { continue };
                    let ix = lo + kx - g.pad;
                    let grow = &gout[(oy * g.wo + lo) * c..][..len];
                    let xrow = &xd[(iy * g.w + ix) * c..][..len];
                    for ((d, &xv), &gv) in acc[..len].iter_mut().zip(xrow).zip(grow) {
                        *d += xv * gv;
                    }
                }
                for px in acc[..len].chunks_exact(c) {
                    for (ch, &v) in px.iter().enumerate() {
                        gw[ch * kk + ky * g.k + kx] += v;
                    }
                }
            }
        }
        for (d, v) in ctx.acc(w).iter_mut().zip(gw) {
            *d += v;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<F: Float>(
    ctx: &mut Ctx<'_, F>,
    x: Var,
    w: Var,
    b: Option<Var>,
    stride: usize,
    pad: usize,
    groups: usize,
    _out_shape: &[usize],
    gout: &[F],
) {
    let g = Geometry::new(
        ctx.values[x.0].shape(),
        ctx.values[w.0].shape(),
        None,
        stride,
        pad,
        groups,
    )
    .expect("geometry validated in forward");

    if let Some(b) = b.filter(|b| ctx.wants(*b)) {
        let gb = ctx.acc(b);
        for grow in gout.chunks_exact(g.cout) {
            for (d, &v) in gb.iter_mut().zip(grow) {
                *d += v;
            }
        }
    }

    if g.rowwise() {
        backward_rowwise(ctx, &g, x, w, gout);
        return;
    }

    if ctx.wants(x) {
        let wt = g.tap_major(ctx.val(w));
        let gx = ctx.acc(x);
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let grow = &gout[(oy * g.wo + ox) * g.cout..][..g.cout];
                for ky in 0..g.k {
                    let Some(iy) = g.src(oy, ky, g.h) else { continue };
                    for kx in 0..g.k {
                        let Some(ix) = g.src(ox, kx, g.w) else { continue };
                        let xg = &mut gx[(iy * g.w + ix) * g.cin..][..g.cin];
                        let wtap = &wt[(ky * g.k + kx) * g.cin * g.opg..][..g.cin * g.opg];
                        if g.depthwise() {
                            for ((d, &gv), &wv) in xg.iter_mut().zip(grow).zip(wtap) {
                                *d += gv * wv;
                            }
                        } else {
                            for (c, d) in xg.iter_mut().enumerate() {
                                let grp = c / g.ipg;
                                *d += dot(&grow[grp * g.opg..][..g.opg], &wtap[c * g.opg..][..g.opg]);
                            }
                        }
                    }
                }
            }
        }
    }

    if ctx.wants(w) {
        let kk = g.k * g.k;
        let mut gwt = vec![F::zero(); kk * g.cin * g.opg];
        let xd = ctx.val(x);
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let grow = &gout[(oy * g.wo + ox) * g.cout..][..g.cout];
                for ky in 0..g.k {
                    let Some(iy) = g.src(oy, ky, g.h) else { continue };
                    for kx in 0..g.k {
                        let Some(ix) = g.src(ox, kx, g.w) else { continue };
                        let xrow = &xd[(iy * g.w + ix) * g.cin..][..g.cin];
                        let dtap = &mut gwt[(ky * g.k + kx) * g.cin * g.opg..][..g.cin * g.opg];
                        if g.depthwise() {
                            for ((d, &xv), &gv) in dtap.iter_mut().zip(xrow).zip(grow) {
                                *d += xv * gv;
                            }
                        } else {
                            for (c, &xv) in xrow.iter().enumerate() {
                                let grp = c / g.ipg;
                                for (d, &gv) in dtap[c * g.opg..][..g.opg]
                                    .iter_mut()
                                    .zip(&grow[grp * g.opg..][..g.opg])
                                {
                                    *d += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
        g.add_from_tap_major(ctx.acc(w), &gwt);
    }
}

impl<F: Float> Graph<F> {
    /// 2-d convolution with zero padding. `w` is `[out, in/groups, k, k]`;
    /// `groups == channels` gives a depthwise convolution.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Result<Var> {
        let out = forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
            groups,
        )?;
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                groups,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop definition of grouped convolution.
    fn naive(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &[f64],
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Tensor<f64> {
        let (h, wd, cin) = x.hwc().unwrap();
        let (cout, ipg, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let opg = cout / groups;
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(vec![ho, wo, cout]);
        for oy in 0..ho {
            for ox in 0..wo {
                for oc in 0..cout {
                    let grp = oc / opg;
                    let mut s = b[oc];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for ci in 0..ipg {
                                let c = grp * ipg + ci;
                                s += x.data()[((iy as usize) * wd + ix as usize) * cin + c]
                                    * w.data()[((oc * ipg + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out.data_mut()[(oy * wo + ox) * cout + oc] = s;
                }
            }
        }
        out
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn scalar_affine() {
        let x = Tensor::new(vec![1, 1, 1], vec![5.0f64]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let b = Tensor::new(vec![1], vec![1.0]).unwrap();
        let y = forward(&x, &w, Some(&b), 1, 0, 1).unwrap();
        assert_eq!(y.data(), &[11.0]);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let x = Tensor::full(vec![4, 4, 2], 3.0f64);
        let w = Tensor::zeros(vec![3, 2, 3, 3]);
        let b = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = forward(&x, &w, Some(&b), 1, 1, 1).unwrap();
        for px in y.data().chunks(3) {
            assert_eq!(px, &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn grouped_equals_per_channel_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor(&mut rng, vec![5, 5, 2]);
        let w = rand_tensor(&mut rng, vec![2, 1, 3, 3]);
        let b = [0.1, -0.2];
        let bt = Tensor::new(vec![2], b.to_vec()).unwrap();
        let y = forward(&x, &w, Some(&bt), 1, 1, 2).unwrap();
        for c in 0..2 {
            let xc = Tensor::from_fn(vec![5, 5, 1], |i| x.data()[i * 2 + c]);
            let wc = Tensor::new(vec![1, 1, 3, 3], w.data()[c * 9..(c + 1) * 9].to_vec()).unwrap();
            let yc = naive(&xc, &wc, &b[c..c + 1], 1, 1, 1);
            for i in 0..25 {
                assert!((y.data()[i * 2 + c] - yc.data()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_matches_naive_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(h, w, cin, cout, k, stride, pad) in &[
            (8, 8, 3, 4, 3, 1, 1),
            (7, 5, 2, 3, 3, 2, 0),
            (6, 8, 4, 2, 1, 1, 0),
            (8, 6, 1, 5, 5, 1, 2),
        ] {
            let x = rand_tensor(&mut rng, vec![h, w, cin]);
            let wt = rand_tensor(&mut rng, vec![cout, cin, k, k]);
            let b: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bt = Tensor::new(vec![cout], b.clone()).unwrap();
            let fast = forward(&x, &wt, Some(&bt), stride, pad, 1).unwrap();
            let slow = naive(&x, &wt, &b, stride, pad, 1);
            assert_eq!(fast.shape(), slow.shape());
            // Same accumulation order: bias, then taps row-major, then channels.
            assert_eq!(fast.data(), slow.data());
        }
    }

    #[test]
    fn grouped_general_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, vec![6, 6, 4]);
        let w = rand_tensor(&mut rng, vec![6, 2, 3, 3]);
        let b = vec![0.0; 6];
        let fast = forward(&x, &w, None, 1, 1, 2).unwrap();
        let slow = naive(&x, &w, &b, 1, 1, 2);
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn depthwise_rows_match_naive_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(h, w, c, k, pad) in &[(7, 9, 3, 5, 0), (6, 5, 4, 3, 1), (3, 2, 2, 5, 2), (4, 4, 1, 3, 3)] {
            let x = rand_tensor(&mut rng, vec![h, w, c]);
            let wt = rand_tensor(&mut rng, vec![c, 1, k, k]);
            let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bt = Tensor::new(vec![c], b.clone()).unwrap();
            let y = forward(&x, &wt, Some(&bt), 1, pad, c).unwrap();
            assert_eq!(y, naive(&x, &wt, &b, 1, pad, c), "{h}x{w}x{c} k{k} p{pad}");
        }
    }

    #[test]
    fn output_size_formula() {
        let x = Tensor::<f32>::zeros(vec![9, 7, 1]);
        let w = Tensor::zeros(vec![1, 1, 3, 3]);
        let y = forward(&x, &w, None, 2, 1, 1).unwrap();
        assert_eq!(y.shape(), &[5, 4, 1]);
    }

    #[test]
    fn shape_errors_name_dimensions() {
        let x = Tensor::<f32>::zeros(vec![4, 4, 3]);
        let w = Tensor::zeros(vec![2, 2, 3, 3]);
        let err = forward(&x, &w, None, 1, 1, 2).unwrap_err().to_string();
        assert!(err.contains("divisible"), "{err}");
        let w = Tensor::zeros(vec![3, 2, 3, 3]);
        let err = forward(&x, &w, None, 1, 1, 1).unwrap_err().to_string();
        assert!(err.contains("input channels"), "{err}");
    }
}

//! Layer normalization over the channel dimension of each pixel.

use super::graph::{Ctx, Op, Var};
use super::{shape_err, Float, Graph, Tensor};
use crate::error::Result;

pub(crate) fn forward<F: Float>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    eps: f64,
) -> Result<(Tensor<F>, Vec<F>, Vec<F>)> {
    let c = *x.shape().last().unwrap_or(&0);
    if gamma.len() != c || beta.len() != c {
        return Err(shape_err(
            "layer_norm",
            format!(
                "gamma/beta lengths {}/{} must equal channel count {c}",
                gamma.len(),
                beta.len()
            ),
        ));
    }
    if eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(shape_err("layer_norm", format!("eps must be > 0, got {eps}")));
    }
    let rows = if c == 0 { 0 } else { x.len() / c };
    let mut out = vec![F::zero(); x.len()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    let (g, b) = (gamma.data(), beta.data());
    for (xrow, orow) in x.data().chunks_exact(c.max(1)).zip(out.chunks_exact_mut(c.max(1))) {
        let mut sum = 0.0f64;
        for &v in xrow {
            sum += v.as_f64();
        }
        let mean = sum / c as f64;
        let mut var = 0.0f64;
        for &v in xrow {
            let d = v.as_f64() - mean;
            var += d * d;
        }
        let rstd = 1.0 / (var / c as f64 + eps).sqrt();
        let (mean, rstd) = (F::lit(mean), F::lit(rstd));
        for (((o, &v), &gv), &bv) in orow.iter_mut().zip(xrow).zip(g).zip(b) {
            *o = (v - mean) * rstd * gv + bv;
        }
        means.push(mean);
        rstds.push(rstd);
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, means, rstds))
}

pub(crate) fn backward<F: Float>(
    ctx: &mut Ctx<'_, F>,
    x: Var,
    gamma: Var,
    beta: Var,
    mean: &[F],
    rstd: &[F],
    gout: &[F],
) {
    let c = ctx.values[gamma.0].len();
    if c == 0 {
        return;
    }
    let xhat: Vec<F> = ctx
        .val(x)
        .chunks_exact(c)
        .zip(mean.iter().zip(rstd))
        .flat_map(|(row, (&m, &r))| row.iter().map(move |&v| (v - m) * r))
        .collect();

    if ctx.wants(beta) {
        let gb = ctx.acc(beta);
        for grow in gout.chunks_exact(c) {
            for (d, &v) in gb.iter_mut().zip(grow) {
                *d += v;
            }
        }
    }
    if ctx.wants(gamma) {
        let gg = ctx.acc(gamma);
        for (grow, hrow) in gout.chunks_exact(c).zip(xhat.chunks_exact(c)) {
            for ((d, &gv), &h) in gg.iter_mut().zip(grow).zip(hrow) {
                *d += gv * h;
            }
        }
    }
    if ctx.wants(x) {
        let (gx, gam) = ctx.acc_with(x, gamma);
        let inv_c = 1.0 / c as f64;
        for (((xg, grow), hrow), &r) in gx
            .chunks_exact_mut(c)
            .zip(gout.chunks_exact(c))
            .zip(xhat.chunks_exact(c))
            .zip(rstd)
        {
            let mut sum_d = 0.0f64;
            let mut sum_dh = 0.0f64;
            for ((&gv, &gm), &h) in grow.iter().zip(gam).zip(hrow) {
                let d = (gv * gm).as_f64();
                sum_d += d;
                sum_dh += d * h.as_f64();
            }
            let md = F::lit(sum_d * inv_c);
            let mdh = F::lit(sum_dh * inv_c);
            for (((o, &gv), &gm), &h) in xg.iter_mut().zip(grow).zip(gam).zip(hrow) {
                *o += r * (gv * gm - md - h * mdh);
            }
        }
    }
}

impl<F: Float> Graph<F> {
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (out, mean, rstd) = forward(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(c: usize) -> Tensor<f64> {
        Tensor::full(vec![c], 1.0)
    }

    #[test]
    fn constant_channels_normalize_to_zero() {
        let x = Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let (y, ..) = forward(&x, &ones(3), &Tensor::zeros(vec![3]), 1e-6).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn already_normalized_is_preserved() {
        let x = Tensor::new(vec![1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let (y, ..) = forward(&x, &ones(2), &Tensor::zeros(vec![2]), 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9 && (y.data()[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn output_mean_equals_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_fn(vec![4, 4, 6], |_| rng.random_range(-3.0f64..3.0));
        let beta = Tensor::full(vec![6], 0.25);
        let (y, ..) = forward(&x, &ones(6), &beta, 1e-5).unwrap();
        for row in y.data().chunks(6) {
            let m: f64 = row.iter().sum::<f64>() / 6.0;
            assert!((m - 0.25).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_affine_length() {
        let x = Tensor::<f32>::zeros(vec![2, 2, 3]);
        assert!(forward(&x, &Tensor::zeros(vec![2]), &Tensor::zeros(vec![3]), 1e-6).is_err());
    }
}

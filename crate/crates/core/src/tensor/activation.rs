use super::graph::{Ctx, Op, Var};
use super::{Float, Graph, Tensor};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
fn gelu<F: Float>(x: F) -> F {
    let half = F::lit(0.5);
    x * half * (F::one() + (x * F::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
fn gelu_grad<F: Float>(x: F) -> F {
    let half = F::lit(0.5);
    let cdf = half * (F::one() + (x * F::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = F::lit(FRAC_1_SQRT_2PI) * (-(x * x) * half).exp_det();
    cdf + x * pdf
}

/// Logistic function kept strictly inside (0, 1) even where the exact value
/// rounds to an endpoint.
#[inline]
pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    let s = if x >= F::zero() {
        F::one() / (F::one() + (-x).exp_det())
    } else {
        let e = x.exp_det();
        e / (F::one() + e)
    };
    if s.is_nan() {
        // max/min would swallow it and hide a diverged model.
        return s;
    }
    let hi = F::one() - F::epsilon() / F::lit(2.0);
    s.max(F::min_positive_value()).min(hi)
}

pub(crate) fn gelu_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, gout: &[F]) {
    if !ctx.wants(x) {
        return;
    }
    let (gx, xv) = ctx.acc_with(x, x);
    for ((d, &v), &g) in gx.iter_mut().zip(xv).zip(gout) {
        *d += g * gelu_grad(v);
    }
}

pub(crate) fn sigmoid_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, out: &[F], gout: &[F]) {
    if !ctx.wants(x) {
        return;
    }
    let gx = ctx.acc(x);
    for ((d, &s), &g) in gx.iter_mut().zip(out).zip(gout) {
        *d += g * s * (F::one() - s);
    }
}

pub(crate) fn clamp_min_backward<F: Float>(ctx: &mut Ctx<'_, F>, x: Var, min: F, gout: &[F]) {
    if !ctx.wants(x) {
        return;
    }
    let (gx, xv) = ctx.acc_with(x, x);
    for ((d, &v), &g) in gx.iter_mut().zip(xv).zip(gout) {
        if v > min {
            *d += g;
        }
    }
}

impl<F: Float> Graph<F> {
    fn map_unary(&mut self, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect())
            .expect("same shape");
        self.push(out, op)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map_unary(x, gelu, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map_unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// `max(x, min)`; the gradient is passed only where `x > min`.
    pub fn clamp_min(&mut self, x: Var, min: f64) -> Var {
        let m = F::lit(min);
        self.map_unary(x, move |a| a.max(m), Op::ClampMin(x, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        assert_eq!(sigmoid(0.0f32), 0.5);
        assert_eq!(gelu(0.0f64), 0.0);
    }

    #[test]
    fn sigmoid_stays_inside_unit_interval() {
        for &x in &[-1e30f32, -200.0, -50.0, 50.0, 200.0, 1e30, f32::MAX] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
        assert!(sigmoid(30.0f64) < 1.0);
        assert!(sigmoid(10.0f32) > 0.9999);
    }

    #[test]
    fn sigmoid_propagates_nan() {
        assert!(sigmoid(f32::NAN).is_nan());
        assert!(sigmoid(f64::NAN).is_nan());
    }

    #[test]
    fn gelu_matches_reference_values() {
        // x * Phi(x) with Phi from the standard normal cdf.
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((gelu(-1.0f64) + 0.158_655_253_931_457_05).abs() < 1e-12);
    }
}

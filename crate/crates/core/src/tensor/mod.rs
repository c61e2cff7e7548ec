//! Dense tensors and a define-by-run reverse-mode autodiff tape.
//!
//! Feature maps are stored channel-last (`[height, width, channels]`), which
//! turns every per-pixel operation (linear layers, layer norm, depthwise
//! convolution) into contiguous inner loops over channels.
//!
//! The engine is generic over [`Float`] so the same kernels run in `f32` for
//! training and inference and in `f64` for gradient checking.

mod activation;
mod conv;
mod elementwise;
mod gemm;
mod graph;
mod interp;
mod linear;
mod norm;
mod reduce;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub use graph::{Graph, Var};
pub use interp::{AxisSampler, Region};

use crate::error::{Error, Result};

/// Scalar type the engine can run in.
pub trait Float:
    num_traits::Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Platform-independent `exp` (no libc).
    fn exp_det(self) -> Self;
    fn erf(self) -> Self;
}

impl Float for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp_det(self) -> Self {
        fast_expf(self)
    }
    #[inline]
    fn erf(self) -> Self {
        fast_erff(self)
    }
}

/// Branch-free `exp` for `f32` (range reduction + degree-5 polynomial),
/// within 2 ulp of the exact value. Plain IEEE arithmetic, so results do not
/// depend on the platform and the loop around it vectorizes.
#[inline(always)]
fn fast_expf(x: f32) -> f32 {
    let x = x.clamp(-87.3, 88.3);
    let fx = (x * std::f32::consts::LOG2_E + 0.5).floor();
    let r = x - fx * 0.693_359_4 - fx * -2.121_944_4e-4;
    let mut y = 1.987_569_1e-4f32;
    y = y * r + 1.398_199_9e-3;
    y = y * r + 8.333_452e-3;
    y = y * r + 4.166_579_6e-2;
    y = y * r + 1.666_666_5e-1;
    y = y * r + 5.000_000_1e-1;
    let y = y * (r * r) + r + 1.0;
    y * f32::from_bits(((fx as i32 + 127) as u32) << 23)
}

/// Rational approximation of `erf` for `f32`; absolute error below 2e-7.
#[inline(always)]
fn fast_erff(x: f32) -> f32 {
    let x = x.clamp(-4.0, 4.0);
    let x2 = x * x;
    let mut p = -2.726_142_3e-10f32;
    p = p * x2 + 2.770_681_4e-8;
    p = p * x2 + -2.101_024e-6;
    p = p * x2 + -5.692_506_4e-5;
    p = p * x2 + -7.349_906_3e-4;
    p = p * x2 + -2.954_6e-3;
    p = p * x2 + -1.609_603_3e-2;
    let mut q = -1.456_607_2e-5f32;
    q = q * x2 + -2.133_740_6e-4;
    q = q * x2 + -1.682_827e-3;
    q = q * x2 + -7.373_329e-3;
    q = q * x2 + -1.426_474e-2;
    x * p / q
}

impl Float for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp_det(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::config(format!(
                "tensor shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: F) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> F) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(height, width, channels)` of a rank-3 feature map.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::config(format!(
                "expected a [height, width, channels] feature map, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::config(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<G: Float>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::lit(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Spatial crop of a `[h, w, c]` map.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        let (sh, sw, c) = self.hwc()?;
        if y0 + h > sh || x0 + w > sw {
            return Err(Error::config(format!(
                "crop {h}x{w} at ({y0}, {x0}) exceeds map {sh}x{sw}"
            )));
        }
        let mut data = Vec::with_capacity(h * w * c);
        for y in y0..y0 + h {
            let row = (y * sw + x0) * c;
            data.extend_from_slice(&self.data[row..row + w * c]);
        }
        Ok(Self {
            shape: vec![h, w, c],
            data,
        })
    }
}

pub(crate) fn shape_err(what: &str, detail: String) -> Error {
    Error::config(format!("{what}: {detail}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_f32_transcendentals_are_accurate() {
        let mut worst_exp = 0.0f64;
        let mut worst_erf = 0.0f64;
        for i in 0..=200_000 {
            let x = -20.0 + i as f64 * 2e-4;
            let e = fast_expf(x as f32) as f64;
            let xe = (x as f32 as f64).exp();
            worst_exp = worst_exp.max((e - xe).abs() / xe);
            let r = fast_erff(x as f32) as f64;
            worst_erf = worst_erf.max((r - libm::erf(x as f32 as f64)).abs());
        }
        assert!(worst_exp < 3e-7, "exp rel err {worst_exp}");
        assert!(worst_erf < 5e-7, "erf abs err {worst_erf}");
        assert!(fast_expf(-1e4) >= 0.0 && fast_expf(1e4).is_finite());
        assert_eq!(fast_erff(0.0), 0.0);
    }
}

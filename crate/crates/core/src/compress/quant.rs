use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_BITS: u8 = 6;

/// Symmetric per-tensor fixed-point format: `w ≈ q · scale` with
/// `q ∈ [-(2^(b-1) - 1), 2^(b-1) - 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantSpec {
    pub bits: u8,
    pub scale: f32,
}

impl QuantSpec {
    pub fn new(bits: u8, scale: f32) -> Result<Self> {
        check_bits(bits)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config(format!("quantization scale must be positive, got {scale}")));
        }
        Ok(Self { bits, scale })
    }

    /// Scale that maps the largest magnitude onto the top level; an all-zero
    /// tensor gets scale 1.
    pub fn fit(w: &[f32], bits: u8) -> Result<Self> {
        check_bits(bits)?;
        let max = w.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        if !max.is_finite() {
            return Err(Error::Numeric("cannot quantize non-finite weights".into()));
        }
        let scale = if max == 0.0 { 1.0 } else { max / qmax(bits) as f32 };
        Ok(Self { bits, scale })
    }

    pub fn qmax(&self) -> i32 {
        qmax(self.bits)
    }

    /// Number of distinct symbols, `2^b`; symbol = `q + 2^(b-1)`.
    pub fn alphabet(&self) -> usize {
        1usize << self.bits
    }

    pub fn quantize(&self, w: f32) -> i32 {
        // f64::round rounds half away from zero.
        let q = (w as f64 / self.scale as f64).round() as i64;
        q.clamp(-self.qmax() as i64, self.qmax() as i64) as i32
    }

    pub fn dequantize(&self, q: i32) -> f32 {
        q as f32 * self.scale
    }

    pub fn symbol(&self, q: i32) -> u32 {
        (q + (1 << (self.bits - 1))) as u32
    }

    pub fn from_symbol(&self, s: u32) -> i32 {
        s as i32 - (1 << (self.bits - 1))
    }
}

fn qmax(bits: u8) -> i32 {
    (1 << (bits - 1)) - 1
}

fn check_bits(bits: u8) -> Result<()> {
    if (2..=8).contains(&bits) {
        Ok(())
    } else {
        Err(Error::config(format!("bit width must be in 2..=8, got {bits}")))
    }
}

pub fn quantize_tensor(w: &[f32], bits: u8) -> Result<(Vec<i32>, QuantSpec)> {
    let spec = QuantSpec::fit(w, bits)?;
    Ok((w.iter().map(|&v| spec.quantize(v)).collect(), spec))
}

pub fn dequantize(q: &[i32], spec: QuantSpec) -> Vec<f32> {
    q.iter().map(|&v| spec.dequantize(v)).collect()
}

/// `w` passed through the quantizer.
pub fn fake_quantize(w: &[f32], bits: u8) -> Result<Vec<f32>> {
    let (q, spec) = quantize_tensor(w, bits)?;
    Ok(dequantize(&q, spec))
}

/// Replaces a random `ratio` fraction of `w` by its quantized value. Returns
/// the effective weights and which elements were replaced (those are
/// constants for the backward pass).
pub fn quant_noise_forward(
    w: &[f32],
    spec: QuantSpec,
    ratio: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<f32>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(format!("noise ratio must be in [0, 1], got {ratio}")));
    }
    let mut out = w.to_vec();
    let mut replaced = vec![false; w.len()];
    if ratio == 0.0 {
        return Ok((out, replaced));
    }
    for ((o, r), &v) in out.iter_mut().zip(&mut replaced).zip(w) {
        if ratio == 1.0 || rng.random::<f64>() < ratio {
            *o = spec.dequantize(spec.quantize(v));
            *r = true;
        }
    }
    Ok((out, replaced))
}

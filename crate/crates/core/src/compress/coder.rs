//! Static-model binary arithmetic coder with 32-bit registers.

use crate::error::{Error, Result};

const BITS: u32 = 32;
const FULL: u64 = 1 << BITS;
const HALF: u64 = FULL >> 1;
const QUARTER: u64 = HALF >> 1;
const MASK: u64 = FULL - 1;
/// Largest histogram total the registers can resolve.
pub const MAX_TOTAL: u64 = QUARTER;

/// Cumulative frequencies of a fixed histogram.
#[derive(Clone, Debug)]
pub struct FreqModel {
    cum: Vec<u64>,
}

impl FreqModel {
    pub fn new(counts: &[u32]) -> Result<Self> {
        let mut cum = Vec::with_capacity(counts.len() + 1);
        cum.push(0u64);
        for &c in counts {
            cum.push(cum.last().unwrap() + c as u64);
        }
        if *cum.last().unwrap() > MAX_TOTAL {
            return Err(Error::bitstream(format!(
                "histogram total {} exceeds the coder limit {MAX_TOTAL}",
                cum.last().unwrap()
            )));
        }
        Ok(Self { cum })
    }

    /// Histogram of `symbols` over an alphabet of `n`.
    pub fn counts(symbols: &[u32], n: usize) -> Vec<u32> {
        let mut c = vec![0u32; n];
        for &s in symbols {
            c[s as usize] += 1;
        }
        c
    }

    pub fn total(&self) -> u64 {
        *self.cum.last().unwrap()
    }

    pub fn symbols(&self) -> usize {
        self.cum.len() - 1
    }

    /// Ideal code length in bits for a message with exactly these counts.
    pub fn entropy_bits(&self) -> f64 {
        let t = self.total() as f64;
        self.cum
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .filter(|&c| c > 0.0)
            .map(|c| c * (t / c).log2())
            .sum()
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u8,
    n: u8,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.n += 1;
        if self.n == 8 {
            self.out.push(self.acc);
            self.acc = 0;
            self.n = 0;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            self.out.push(self.acc << (8 - self.n));
        }
        self.out
    }
}

pub fn encode(symbols: &[u32], model: &FreqModel) -> Result<Vec<u8>> {
    let total = model.total();
    let (mut low, mut high, mut pending) = (0u64, MASK, 0u64);
    let mut w = BitWriter {
        out: Vec::new(),
        acc: 0,
        n: 0,
    };
    let emit = |w: &mut BitWriter, bit: bool, pending: &mut u64| {
        w.push(bit);
        for _ in 0..*pending {
            w.push(!bit);
        }
        *pending = 0;
    };
    for &s in symbols {
        let s = s as usize;
        if s >= model.symbols() || model.cum[s] == model.cum[s + 1] {
            return Err(Error::bitstream(format!("symbol {s} has zero frequency")));
        }
        let range = high - low + 1;
        high = low + range * model.cum[s + 1] / total - 1;
        low += range * model.cum[s] / total;
        loop {
            if high < HALF {
                emit(&mut w, false, &mut pending);
            } else if low >= HALF {
                emit(&mut w, true, &mut pending);
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                pending += 1;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
        }
    }
    if !symbols.is_empty() {
        pending += 1;
        emit(&mut w, low >= QUARTER, &mut pending);
    }
    Ok(w.finish())
}

pub fn decode(bytes: &[u8], model: &FreqModel, count: usize) -> Result<Vec<u32>> {
    let total = model.total();
    if count > 0 && total == 0 {
        return Err(Error::bitstream("empty histogram for a non-empty payload"));
    }
    let mut pos = 0usize;
    let mut next_bit = || {
        let bit = bytes
            .get(pos / 8)
            .map_or(0, |b| (b >> (7 - pos % 8)) & 1) as u64;
        pos += 1;
        bit
    };
    let (mut low, mut high, mut code) = (0u64, MASK, 0u64);
    for _ in 0..BITS {
        code = (code << 1) | next_bit();
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let range = high - low + 1;
        let value = ((code - low + 1) * total - 1) / range;
        // Last s with cum[s] <= value.
        let s = model.cum.partition_point(|&c| c <= value) - 1;
        if s >= model.symbols() {
            return Err(Error::bitstream("arithmetic decoder out of range"));
        }
        out.push(s as u32);
        high = low + range * model.cum[s + 1] / total - 1;
        low += range * model.cum[s] / total;
        loop {
            if high < HALF {
            } else if low >= HALF {
                low -= HALF;
                high -= HALF;
                code -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                low -= QUARTER;
                high -= QUARTER;
                code -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            code = (code << 1) | next_bit();
        }
        if code < low || code > high {
            return Err(Error::bitstream("corrupt arithmetic-coded payload"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn round_trip(symbols: &[u32], n: usize) -> Vec<u8> {
        let model = FreqModel::new(&FreqModel::counts(symbols, n)).unwrap();
        let bytes = encode(symbols, &model).unwrap();
        assert_eq!(decode(&bytes, &model, symbols.len()).unwrap(), symbols);
        bytes
    }

    #[test]
    fn constant_stream_costs_a_byte() {
        assert!(round_trip(&[5; 10_000], 64).len() <= 1);
        assert!(round_trip(&[], 4).is_empty());
    }

    #[test]
    fn uniform_symbols_are_incompressible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..64)).collect();
        let bytes = round_trip(&s, 64);
        let bps = bytes.len() as f64 * 8.0 / s.len() as f64;
        assert!(bps >= 5.9, "{bps}");
    }

    #[test]
    fn skewed_stream_near_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<u32> = (0..100_000)
            .map(|_| (rng.random::<f64>().powi(6) * 64.0) as u32)
            .collect();
        let model = FreqModel::new(&FreqModel::counts(&s, 64)).unwrap();
        let bytes = round_trip(&s, 64);
        assert!(bytes.len() as f64 <= model.entropy_bits() / 8.0 + 64.0);
    }

    #[test]
    fn unseen_symbol_rejected() {
        let model = FreqModel::new(&[3, 0, 1]).unwrap();
        assert!(encode(&[1], &model).is_err());
        assert!(encode(&[3], &model).is_err());
    }
}

//! Container layout (little endian):
//!
//! ```text
//! "HNRV" | version u16 | config len u32 | config text
//! | tensor count u32
//! | per tensor: id u32, rank u8, dims u32[rank], bits u8, scale f32,
//!   mask len u32, mask runs, histogram u32[2^bits], payload len u32, payload
//! | CRC32 of everything before it
//! ```
//!
//! Masks are present only for prunable tensors and list alternating
//! kept/pruned run lengths as LEB128 varints, starting with a kept run.
//! Pruned elements are not coded; every other element is one symbol
//! `q + 2^(bits-1)`.

use super::coder::{self, FreqModel};
use super::prune::PruneMask;
use super::quant::QuantSpec;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::Tensor;
use crate::HiNeRV;

pub const MAGIC: &[u8; 4] = b"HNRV";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTensor {
    pub id: u32,
    pub shape: Vec<usize>,
    pub spec: QuantSpec,
    /// Keep flags; `None` for tensors that are never pruned.
    pub mask: Option<Vec<bool>>,
    /// Quantized value of every element (zero where pruned).
    pub q: Vec<i32>,
}

impl EncodedTensor {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn pruned(&self) -> usize {
        self.mask.as_ref().map_or(0, |m| m.iter().filter(|&&k| !k).count())
    }

    pub fn dequantized(&self) -> Result<Tensor<f32>> {
        Tensor::new(self.shape.clone(), self.q.iter().map(|&v| self.spec.dequantize(v)).collect())
    }

    fn symbols(&self) -> Vec<u32> {
        match &self.mask {
            Some(m) => self
                .q
                .iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .map(|(&q, _)| self.spec.symbol(q))
                .collect(),
            None => self.q.iter().map(|&q| self.spec.symbol(q)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bitstream {
    pub config: ModelConfig,
    pub tensors: Vec<EncodedTensor>,
}

/// Byte counts of each section of an encoded stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SizeReport {
    /// Magic, version, config block, tensor count and checksum.
    pub container: usize,
    pub tensors: Vec<TensorSize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorSize {
    /// Id, rank, dims, bit width and scale.
    pub header: usize,
    /// Length prefix plus runs.
    pub mask: usize,
    pub histogram: usize,
    /// Length prefix plus coded bytes.
    pub payload: usize,
}

impl TensorSize {
    pub fn total(&self) -> usize {
        self.header + self.mask + self.histogram + self.payload
    }
}

impl SizeReport {
    pub fn total(&self) -> usize {
        self.container + self.tensors.iter().map(TensorSize::total).sum::<usize>()
    }
}

impl Bitstream {
    /// Quantizes every parameter of `model` to `bits`, honouring `mask`.
    pub fn from_model(model: &HiNeRV, mask: Option<&PruneMask>, bits: u8) -> Result<Self> {
        let full = PruneMask::for_specs(model.specs());
        let mask = mask.unwrap_or(&full);
        if mask.tensors() != model.params().len() {
            return Err(Error::usage("prune mask does not match the model"));
        }
        let tensors = model
            .params()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let spec = QuantSpec::fit(p.data(), bits)?;
                let keep = if model.specs()[k].kind.prunable() {
                    Some(mask.keep(k).map_or_else(|| vec![true; p.len()], <[bool]>::to_vec))
                } else {
                    None
                };
                let q = p
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| match &keep {
                        Some(m) if !m[i] => 0,
                        _ => spec.quantize(w),
                    })
                    .collect();
                Ok(EncodedTensor {
                    id: k as u32,
                    shape: p.shape().to_vec(),
                    spec,
                    mask: keep,
                    q,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: model.config().clone(),
            tensors,
        })
    }

    pub fn mask(&self) -> PruneMask {
        PruneMask::from_keep(self.tensors.iter().map(|t| t.mask.clone()).collect())
    }

    /// The model with the decoded (dequantized) weights.
    pub fn to_model(&self) -> Result<HiNeRV> {
        let params = self
            .tensors
            .iter()
            .map(EncodedTensor::dequantized)
            .collect::<Result<Vec<_>>>()?;
        HiNeRV::from_params(self.config.clone(), params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.encode()?.0)
    }

    /// Serialised bytes and their section sizes.
    pub fn encode(&self) -> Result<(Vec<u8>, SizeReport)> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = self.config.to_text();
        put_u32(&mut out, cfg.len())?;
        out.extend_from_slice(cfg.as_bytes());
        put_u32(&mut out, self.tensors.len())?;
        let mut report = SizeReport {
            container: out.len() + 4,
            tensors: Vec::with_capacity(self.tensors.len()),
        };
        for t in &self.tensors {
            let mut size = TensorSize::default();
            let start = out.len();
            out.extend_from_slice(&t.id.to_le_bytes());
            let rank = u8::try_from(t.shape.len()).map_err(|_| Error::bitstream("tensor rank above 255"))?;
            out.push(rank);
            for &d in &t.shape {
                put_u32(&mut out, d)?;
            }
            out.push(t.spec.bits);
            out.extend_from_slice(&t.spec.scale.to_le_bytes());
            size.header = out.len() - start;

            let runs = t.mask.as_deref().map(encode_runs).unwrap_or_default();
            put_u32(&mut out, runs.len())?;
            out.extend_from_slice(&runs);
            size.mask = 4 + runs.len();

            let symbols = t.symbols();
            let counts = FreqModel::counts(&symbols, t.spec.alphabet());
            for c in &counts {
                out.extend_from_slice(&c.to_le_bytes());
            }
            size.histogram = 4 * counts.len();

            let payload = coder::encode(&symbols, &FreqModel::new(&counts)?)?;
            put_u32(&mut out, payload.len())?;
            out.extend_from_slice(&payload);
            size.payload = 4 + payload.len();
            report.tensors.push(size);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(report.total(), out.len());
        Ok((out, report))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self::decode(bytes)?.0)
    }

    pub fn decode(bytes: &[u8]) -> Result<(Self, SizeReport)> {
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(Error::bitstream("not a bitstream (bad magic)"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::bitstream(format!(
                "unsupported bitstream version {version} (expected {VERSION})"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::bitstream("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 6 };
        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|_| Error::bitstream("config block is not UTF-8"))?;
        let config = ModelConfig::parse(cfg_text).map_err(|e| Error::bitstream(format!("config block: {e}")))?;
        let count = r.u32()? as usize;
        let mut report = SizeReport {
            container: r.pos + 4,
            tensors: Vec::with_capacity(count),
        };
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let mut size = TensorSize::default();
            let start = r.pos;
            let id = r.u32()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::bitstream("tensor size overflows"))?;
            let bits = r.u8()?;
            let scale = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            let spec = QuantSpec::new(bits, scale).map_err(|e| Error::bitstream(format!("tensor {id}: {e}")))?;
            size.header = r.pos - start;

            let mask_len = r.u32()? as usize;
            let mask = if mask_len == 0 {
                None
            } else {
                Some(decode_runs(r.take(mask_len)?, n)?)
            };
            size.mask = 4 + mask_len;

            let counts = (0..spec.alphabet()).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            size.histogram = 4 * counts.len();
            let model = FreqModel::new(&counts)?;
            let kept = mask.as_ref().map_or(n, |m| m.iter().filter(|&&k| k).count());
            if model.total() != kept as u64 {
                return Err(Error::bitstream(format!(
                    "tensor {id}: histogram counts {} symbols, mask keeps {kept}",
                    model.total()
                )));
            }
            let pl = r.u32()? as usize;
            let symbols = coder::decode(r.take(pl)?, &model, kept)?;
            size.payload = 4 + pl;
            let mut it = symbols.into_iter();
            let q = (0..n)
                .map(|i| match &mask {
                    Some(m) if !m[i] => 0,
                    _ => spec.from_symbol(it.next().expect("symbol count checked")),
                })
                .collect();
            tensors.push(EncodedTensor {
                id,
                shape,
                spec,
                mask,
                q,
            });
            report.tensors.push(size);
        }
        if r.pos != body.len() {
            return Err(Error::bitstream(format!("{} trailing bytes", body.len() - r.pos)));
        }
        let bs = Self { config, tensors };
        bs.check_layout()?;
        Ok((bs, report))
    }

    /// Tensor ids, shapes and mask presence must follow the config's layout.
    fn check_layout(&self) -> Result<()> {
        let specs = HiNeRV::layout_specs(&self.config).map_err(|e| Error::bitstream(format!("config block: {e}")))?;
        if specs.len() != self.tensors.len() {
            return Err(Error::bitstream(format!(
                "config needs {} tensors, stream has {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for (k, (s, t)) in specs.iter().zip(&self.tensors).enumerate() {
            if t.id as usize != k || t.shape != s.shape || t.mask.is_some() != s.kind.prunable() {
                return Err(Error::bitstream(format!("tensor {k} ({}) does not match the config", s.name)));
            }
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::bitstream(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

/// Alternating kept/pruned run lengths, first run kept (possibly empty).
pub fn encode_runs(keep: &[bool]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut want = true;
    let mut i = 0;
    while i < keep.len() {
        let start = i;
        while i < keep.len() && keep[i] == want {
            i += 1;
        }
        put_varint(&mut out, (i - start) as u64);
        want = !want;
    }
    if keep.is_empty() {
        put_varint(&mut out, 0);
    }
    out
}

pub fn decode_runs(bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    let mut keep = Vec::with_capacity(n);
    let mut want = true;
    let mut pos = 0;
    while pos < bytes.len() {
        let mut v = 0u64;
        let mut shift = 0;
        loop {
            let b = *bytes.get(pos).ok_or_else(|| Error::bitstream("truncated mask run"))?;
            pos += 1;
            if shift > 56 {
                return Err(Error::bitstream("mask run too long"));
            }
            v |= ((b & 0x7f) as u64) << shift;
            shift += 7;
            if b & 0x80 == 0 {
                break;
            }
        }
        if keep.len() as u64 + v > n as u64 {
            return Err(Error::bitstream("mask runs exceed the tensor size"));
        }
        keep.extend(std::iter::repeat_n(want, v as usize));
        want = !want;
    }
    if keep.len() != n {
        return Err(Error::bitstream(format!("mask covers {} of {n} elements", keep.len())));
    }
    Ok(keep)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::bitstream("unexpected end of stream"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// `8 · bytes / (T · H · W)`.
pub fn bits_per_pixel(bytes: usize, frames: usize, height: usize, width: usize) -> f64 {
    8.0 * bytes as f64 / (frames * height * width) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_round_trip() {
        for keep in [
            vec![],
            vec![true; 5],
            vec![false; 5],
            vec![false, true, true, false, false, false, true],
            (0..1000).map(|i| i % 7 != 3).collect(),
        ] {
            let n = keep.len();
            assert_eq!(decode_runs(&encode_runs(&keep), n).unwrap(), keep);
        }
        assert!(decode_runs(&encode_runs(&[true, false]), 3).is_err());
    }

    #[test]
    fn bpp_example() {
        let bpp = bits_per_pixel(100_000, 132, 720, 1280);
        assert!((bpp - 0.006_576).abs() < 1e-6, "{bpp}");
    }
}

//! Uncompressed model snapshot: `"HNRV"`, version, length-prefixed config
//! text, then every parameter as little-endian `f32` in layout order.

use std::io::{Read, Write};

use super::{HiNeRV, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HNRV";
/// Distinct from the bitstream version so the two files cannot be confused.
pub const CHECKPOINT_VERSION: u16 = 0x0100;

pub fn write_checkpoint(model: &HiNeRV, mut out: impl Write) -> Result<()> {
    let cfg = model.config().to_text();
    let mut buf = Vec::with_capacity(16 + cfg.len() + model.param_count() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg.as_bytes());
    for t in model.params() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
        .map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint(mut input: impl Read) -> Result<HiNeRV> {
    let mut buf = Vec::new();
    input
        .read_to_end(&mut buf)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let short = || Error::bitstream("checkpoint truncated");
    if buf.len() < 10 || &buf[..4] != MAGIC {
        return Err(Error::bitstream("not a checkpoint (bad magic)"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::bitstream(format!(
            "checkpoint version {version:#06x}, expected {CHECKPOINT_VERSION:#06x}"
        )));
    }
    let n = u32::from_le_bytes(buf[6..10].try_into().expect("4 bytes")) as usize;
    let text = buf.get(10..10 + n).ok_or_else(short)?;
    let text = std::str::from_utf8(text).map_err(|_| Error::bitstream("config is not utf-8"))?;
    let config = ModelConfig::parse(text)?;
    let (specs, _) = super::params::build(&config);
    let mut pos = 10 + n;
    let mut params = Vec::with_capacity(specs.len());
    for s in &specs {
        let len = s.len() * 4;
        let raw = buf.get(pos..pos + len).ok_or_else(short)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.push(Tensor::new(s.shape.clone(), data)?);
        pos += len;
    }
    if pos != buf.len() {
        return Err(Error::bitstream(format!(
            "{} trailing bytes after parameters",
            buf.len() - pos
        )));
    }
    HiNeRV::from_params(config, params)
}

//! `EETF` float checkpoints and the network descriptor shared with `EETQ` files.
//!
//! Descriptor: u8 head, u16 c, u16 h, u16 w, u16 layer count, then per layer
//! u8 kind, u32 a, u32 b. All integers little-endian.

use std::path::Path;

use super::{Head, LayerParams, LayerSpec, NetworkSpec, Params, Shape};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EETF";

/// Little-endian cursor with location-tagged errors.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Reader { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::malformed(
                format!("{} byte {}", self.what, self.pos),
                format!("truncated: need {n} more bytes"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn i8(&mut self) -> Result<i8> {
        Ok(self.u8()? as i8)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != expected {
            return Err(Error::malformed(
                format!("{} byte 0", self.what),
                format!("bad magic {:?}", String::from_utf8_lossy(m)),
            ));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::malformed(
                format!("{} byte {}", self.what, self.pos),
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }
}

fn dim_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidParam(format!("{what} {v} does not fit in u16")))
}

fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidParam(format!("dimension {v} does not fit in u32")))
}

pub fn encode_spec(spec: &NetworkSpec, out: &mut Vec<u8>) -> Result<()> {
    out.push(match spec.head {
        Head::Regression => 0,
        Head::Classification => 1,
    });
    for (v, what) in [(spec.input.c, "channels"), (spec.input.h, "height"), (spec.input.w, "width")] {
        out.extend_from_slice(&dim_u16(v, what)?.to_le_bytes());
    }
    out.extend_from_slice(&dim_u16(spec.layers.len(), "layer count")?.to_le_bytes());
    for l in &spec.layers {
        let (kind, a, b) = match *l {
            LayerSpec::Conv3x3 { in_ch, out_ch } => (0u8, in_ch, out_ch),
            LayerSpec::Relu => (1, 0, 0),
            LayerSpec::MaxPool2x2 => (2, 0, 0),
            LayerSpec::Flatten => (3, 0, 0),
            LayerSpec::Dense { inputs, outputs } => (4, inputs, outputs),
        };
        out.push(kind);
        out.extend_from_slice(&dim_u32(a)?.to_le_bytes());
        out.extend_from_slice(&dim_u32(b)?.to_le_bytes());
    }
    Ok(())
}

pub(crate) fn read_spec(r: &mut Reader<'_>) -> Result<NetworkSpec> {
    let at = r.position();
    let head = match r.u8()? {
        0 => Head::Regression,
        1 => Head::Classification,
        h => {
            return Err(Error::malformed(format!("{} byte {at}", r.what), format!("unknown head {h}")))
        }
    };
    let input = Shape::new(r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
    let n = r.u16()? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.position();
        let kind = r.u8()?;
        let (a, b) = (r.u32()? as usize, r.u32()? as usize);
        layers.push(match kind {
            0 => LayerSpec::Conv3x3 { in_ch: a, out_ch: b },
            1 => LayerSpec::Relu,
            2 => LayerSpec::MaxPool2x2,
            3 => LayerSpec::Flatten,
            4 => LayerSpec::Dense { inputs: a, outputs: b },
            k => {
                return Err(Error::malformed(
                    format!("{} byte {at}", r.what),
                    format!("unknown layer kind {k}"),
                ))
            }
        });
    }
    let spec = NetworkSpec { input, layers, head };
    spec.shapes()?;
    Ok(spec)
}

/// Parses a standalone descriptor block.
pub fn decode_spec(bytes: &[u8]) -> Result<NetworkSpec> {
    let mut r = Reader::new(bytes, "spec descriptor");
    let spec = read_spec(&mut r)?;
    r.finish()?;
    Ok(spec)
}

pub fn encode_checkpoint(spec: &NetworkSpec, params: &Params<f32>) -> Result<Vec<u8>> {
    params.check(spec)?;
    let mut out = CHECKPOINT_MAGIC.to_vec();
    encode_spec(spec, &mut out)?;
    for lp in &params.layers {
        for v in lp.weights.iter().chain(&lp.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkSpec, Params<f32>)> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.magic(CHECKPOINT_MAGIC)?;
    let spec = read_spec(&mut r)?;
    let mut layers = Vec::new();
    for l in spec.param_layers() {
        let weights = (0..l.weight_count()).map(|_| r.f32()).collect::<Result<_>>()?;
        let bias = (0..l.bias_count()).map(|_| r.f32()).collect::<Result<_>>()?;
        layers.push(LayerParams { weights, bias });
    }
    r.finish()?;
    Ok((spec, Params { layers }))
}

pub fn write_checkpoint(path: &Path, spec: &NetworkSpec, params: &Params<f32>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(spec, params)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(NetworkSpec, Params<f32>)> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

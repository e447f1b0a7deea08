//! Flat binary weight container.
//!
//! ```text
//! header (12 bytes)
//!   magic        4 bytes  b"FDWT"
//!   version      u16 LE   1
//!   float width  u8       4 or 8
//!   reserved     u8       0
//!   layer count  u32 LE
//! per layer (16-byte record header, then payload)
//!   kind tag     u8       1 dense, 2 conv1d, 3 softmax-output
//!   reserved     3 bytes  0
//!   kernel       u32 LE   1 for dense layers
//!   inputs       u32 LE   fan-in (dense) or input channels (conv1d)
//!   outputs      u32 LE
//!   weights      kernel·inputs·outputs floats, [kernel][inputs][outputs] row-major
//!   bias         outputs floats
//! ```
//!
//! All floats are little-endian at the header's width. The same encoding is
//! the wire payload counted by the communication ledger; a partial upload is
//! a header followed by the records of the uploaded layers.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{LayerWeights, ModelWeights, ParamKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CONTAINER_MAGIC: [u8; 4] = *b"FDWT";
pub const CONTAINER_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 12;
pub const LAYER_HEADER_BYTES: usize = 16;

pub fn layer_record_size<S: Scalar>(layer: &LayerWeights<S>) -> usize {
    LAYER_HEADER_BYTES + layer.param_count() * S::BYTES
}

/// Size of a container holding exactly `layers`.
pub fn payload_size<'a, S: Scalar + 'a>(
    layers: impl IntoIterator<Item = &'a LayerWeights<S>>,
) -> usize {
    HEADER_BYTES + layers.into_iter().map(layer_record_size).sum::<usize>()
}

pub fn byte_size<S: Scalar>(model: &ModelWeights<S>) -> usize {
    payload_size(model.layers())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes<S: Scalar>(model: &ModelWeights<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(byte_size(model));
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.push(S::BYTES as u8);
    out.push(0);
    put_u32(&mut out, model.len());
    for layer in model.layers() {
        out.push(layer.kind().tag());
        out.extend_from_slice(&[0; 3]);
        put_u32(&mut out, layer.kernel());
        put_u32(&mut out, layer.inputs());
        put_u32(&mut out, layer.outputs());
        for v in layer.weights().iter().chain(layer.bias()) {
            v.put_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Container(format!("truncated at byte {} (need {n} more)", self.pos))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn floats<S: Scalar>(&mut self, n: usize, width: usize) -> Result<Vec<S>> {
        let raw = self.take(
            n.checked_mul(width)
                .ok_or_else(|| Error::Container("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    S::of(f32::get_le(c) as f64)
                } else {
                    S::of(f64::get_le(c))
                }
            })
            .collect())
    }
}

/// Decodes a container written at either precision into `S`.
pub fn from_bytes<S: Scalar>(bytes: &[u8]) -> Result<ModelWeights<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CONTAINER_MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let width = r.take(2)?[0] as usize;
    if width != 4 && width != 8 {
        return Err(Error::Container(format!("unsupported float width {width}")));
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for idx in 0..count {
        let tag = r.take(4)?[0];
        let kind = ParamKind::from_tag(tag)
            .ok_or_else(|| Error::Container(format!("layer {idx}: unknown kind tag {tag}")))?;
        let (kernel, inputs, outputs) = (r.u32()?, r.u32()?, r.u32()?);
        let weights = r.floats(kernel * inputs * outputs, width)?;
        let bias = r.floats(outputs, width)?;
        layers.push(
            LayerWeights::new(kind, kernel, inputs, outputs, weights, bias)
                .map_err(|e| Error::Container(format!("layer {idx}: {e}")))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::Container(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    ModelWeights::new(layers)
}

pub fn write_file<S: Scalar>(model: &ModelWeights<S>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn read_file<S: Scalar>(path: &Path) -> Result<ModelWeights<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Hex SHA-256 of the encoded container.
pub fn content_hash<S: Scalar>(model: &ModelWeights<S>) -> String {
    hex::encode(Sha256::digest(to_bytes(model)))
}

/// One line per parameterized layer: `kind in out`.
pub fn shape_dump<S: Scalar>(model: &ModelWeights<S>) -> String {
    let mut out = String::new();
    for layer in model.layers() {
        let _ = writeln!(
            out,
            "{} {} {}",
            layer.kind().name(),
            layer.inputs(),
            layer.outputs()
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeLine {
    pub kind: ParamKind,
    pub inputs: usize,
    pub outputs: usize,
}

pub fn parse_shape_dump(text: &str) -> Result<Vec<ShapeLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = || Error::Container(format!("shape dump line {}: `{line}`", n + 1));
            let mut parts = line.split_whitespace();
            let kind = parts
                .next()
                .and_then(ParamKind::from_name)
                .ok_or_else(bad)?;
            let inputs = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let outputs = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(ShapeLine {
                kind,
                inputs,
                outputs,
            })
        })
        .collect()
}

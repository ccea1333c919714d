//! `PFAN` layered bitstream: header, channel partition and two coded layers.
//!
//! ```text
//! "PFAN" | version u8 | height u16 | width u16 | channels u16 | base_count u16
//! | base indices u16 * base_count | enhancement indices u16 * (channels - base_count)
//! | base layer | enhancement layer
//!
//! layer := min f32 | max f32 | qp u8 | codec_id u8 | payload_len u32 | payload
//! ```
//!
//! All integers and floats are little-endian.

use serde::{Deserialize, Serialize};

use super::{CodecId, CodecParams};
use crate::error::{Error, Result};
use crate::quant::QuantParams;
use crate::scoring::Partition;

pub const MAGIC: &[u8; 4] = b"PFAN";
pub const VERSION: u8 = 1;
const FIXED_HEADER: usize = 4 + 1 + 2 * 4;
const LAYER_HEADER: usize = 4 + 4 + 1 + 1 + 4;

/// One coded channel group.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub quant: QuantParams,
    pub codec: CodecParams,
    pub payload: Vec<u8>,
}

impl Layer {
    /// Layer carrying no channels.
    pub fn empty(codec: CodecParams) -> Self {
        Self {
            quant: QuantParams {
                min: 0.0,
                max: 0.0,
                bits: crate::quant::QUANT_BITS,
            },
            codec,
            payload: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredBitstream {
    pub height: usize,
    pub width: usize,
    pub partition: Partition,
    pub base: Layer,
    pub enhancement: Layer,
}

/// Byte counts of a serialized stream, derived from its headers alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub header_bytes: usize,
    pub base_bytes: usize,
    pub enhancement_bytes: usize,
    pub total_bytes: usize,
}

fn u16_dim(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::Validation(format!("{what} {v} exceeds u16 range")))
}

/// Builds a stream from its parts, checking that they agree.
pub fn pack(
    height: usize,
    width: usize,
    partition: Partition,
    base: Layer,
    enhancement: Layer,
) -> Result<LayeredBitstream> {
    let bs = LayeredBitstream {
        height,
        width,
        partition,
        base,
        enhancement,
    };
    bs.validate()?;
    Ok(bs)
}

/// Splits a stream back into `(height, width, partition, base, enhancement)`.
pub fn unpack(bs: LayeredBitstream) -> (usize, usize, Partition, Layer, Layer) {
    (bs.height, bs.width, bs.partition, bs.base, bs.enhancement)
}

impl LayeredBitstream {
    pub fn channels(&self) -> usize {
        self.partition.channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Validation("stream dimensions must be positive".into()));
        }
        u16_dim(self.height, "height")?;
        u16_dim(self.width, "width")?;
        u16_dim(self.channels(), "channel count")?;
        self.partition.validate(self.channels())?;
        if self.partition.base.is_empty() {
            return Err(Error::Validation("base layer carries no channels".into()));
        }
        for layer in [&self.base, &self.enhancement] {
            layer.quant.validate()?;
            layer.codec.validate()?;
            u32::try_from(layer.payload.len())
                .map_err(|_| Error::Validation("layer payload exceeds u32 range".into()))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.size_report().total_bytes);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for v in [self.height, self.width, self.channels(), self.partition.base.len()] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        for &c in self.partition.base.iter().chain(&self.partition.enhancement) {
            out.extend_from_slice(&(c as u16).to_le_bytes());
        }
        for layer in [&self.base, &self.enhancement] {
            out.extend_from_slice(&layer.quant.min.to_le_bytes());
            out.extend_from_slice(&layer.quant.max.to_le_bytes());
            out.push(layer.codec.qp);
            out.push(layer.codec.codec as u8);
            out.extend_from_slice(&(layer.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&layer.payload);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        let (height, width, base_idx, enh_idx) = read_header(&mut r)?;
        let base = read_layer(&mut r)?;
        let enhancement = read_layer(&mut r)?;
        if r.at != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after enhancement layer",
                bytes.len() - r.at
            )));
        }
        let bs = LayeredBitstream {
            height,
            width,
            partition: Partition {
                base: base_idx,
                enhancement: enh_idx,
            },
            base,
            enhancement,
        };
        bs.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(bs)
    }

    pub fn size_report(&self) -> SizeReport {
        let header = FIXED_HEADER + 2 * self.channels();
        let base = LAYER_HEADER + self.base.payload.len();
        let enh = LAYER_HEADER + self.enhancement.payload.len();
        SizeReport {
            header_bytes: header,
            base_bytes: base,
            enhancement_bytes: enh,
            total_bytes: header + base + enh,
        }
    }
}

/// Computes the size report by walking headers and skipping payloads.
pub fn size_report(bytes: &[u8]) -> Result<SizeReport> {
    let mut r = Reader { bytes, at: 0 };
    read_header(&mut r)?;
    let header = r.at;
    let mut layer_sizes = [0usize; 2];
    for size in &mut layer_sizes {
        let start = r.at;
        r.take(LAYER_HEADER - 4)?;
        let len = r.u32()? as usize;
        r.take(len)?;
        *size = r.at - start;
    }
    Ok(SizeReport {
        header_bytes: header,
        base_bytes: layer_sizes[0],
        enhancement_bytes: layer_sizes[1],
        total_bytes: r.at,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Length {
                expected: self.at.saturating_add(n),
                found: self.bytes.len(),
            })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<(usize, usize, Vec<usize>, Vec<usize>)> {
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Format("missing PFAN magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported PFAN version {version}")));
    }
    let height = usize::from(r.u16()?);
    let width = usize::from(r.u16()?);
    let channels = usize::from(r.u16()?);
    let base_count = usize::from(r.u16()?);
    if base_count > channels {
        return Err(Error::Format(format!(
            "base count {base_count} exceeds {channels} channels"
        )));
    }
    let mut indices = Vec::with_capacity(channels);
    for _ in 0..channels {
        indices.push(usize::from(r.u16()?));
    }
    let enh = indices.split_off(base_count);
    Ok((height, width, indices, enh))
}

fn read_layer(r: &mut Reader<'_>) -> Result<Layer> {
    let min = r.f32()?;
    let max = r.f32()?;
    let qp = r.u8()?;
    let codec = CodecId::try_from(r.u8()?)?;
    let len = r.u32()? as usize;
    let payload = r.take(len)?.to_vec();
    Ok(Layer {
        quant: QuantParams::new(min, max).map_err(|e| Error::Format(e.to_string()))?,
        codec: CodecParams { qp, codec },
        payload,
    })
}

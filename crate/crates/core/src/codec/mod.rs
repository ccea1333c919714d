//! Layered coding of feature tensors: channel groups are quantized, tiled
//! into mosaics and coded independently as a base and an enhancement layer.

pub mod container;
pub mod dct;
pub mod external;

use serde::{Deserialize, Serialize};

pub use container::{pack, size_report, unpack, Layer, LayeredBitstream, SizeReport};
pub use external::ExternalCodec;

use crate::error::{Error, Result};
use crate::quant::{dequantize_group, quantize_group, tile, untile, Mosaic};
use crate::scoring::Partition;
use crate::tensor::FeatureTensor;

pub const MAX_QP: u8 = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum CodecId {
    InternalDct = 0,
    External = 1,
}

impl TryFrom<u8> for CodecId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(CodecId::InternalDct),
            1 => Ok(CodecId::External),
            _ => Err(Error::Format(format!("unknown codec id {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecParams {
    pub qp: u8,
    pub codec: CodecId,
}

impl CodecParams {
    pub fn internal(qp: u8) -> Self {
        Self {
            qp,
            codec: CodecId::InternalDct,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qp > MAX_QP {
            return Err(Error::Validation(format!("qp {} outside [0, {MAX_QP}]", self.qp)));
        }
        Ok(())
    }

    /// Quantizer step, `2^((qp - 4) / 6)`.
    pub fn qstep(&self) -> f64 {
        dct::qstep(self.qp)
    }
}

fn need_external<'a>(params: &CodecParams, external: Option<&'a ExternalCodec>) -> Result<&'a ExternalCodec> {
    external.ok_or_else(|| Error::Environment {
        message: format!(
            "no external codec configured (set {} and {})",
            external::ENCODE_ENV,
            external::DECODE_ENV
        ),
        command: format!("<external codec at qp {}>", params.qp),
    })
}

pub fn encode_mosaic(mosaic: &Mosaic, params: &CodecParams, external: Option<&ExternalCodec>) -> Result<Vec<u8>> {
    params.validate()?;
    match params.codec {
        CodecId::InternalDct => dct::encode(mosaic, params.qp),
        CodecId::External => need_external(params, external)?.encode(mosaic, params.qp),
    }
}

/// Decodes into a mosaic with the geometry of `shape`.
pub fn decode_mosaic(
    bytes: &[u8],
    params: &CodecParams,
    shape: &Mosaic,
    external: Option<&ExternalCodec>,
) -> Result<Mosaic> {
    params.validate()?;
    shape.validate()?;
    match params.codec {
        CodecId::InternalDct => dct::decode(bytes, params.qp, shape),
        CodecId::External => need_external(params, external)?.decode(bytes, params.qp, shape),
    }
}

/// Quantizes, tiles and codes one channel group.
pub fn encode_layer(
    tensor: &FeatureTensor,
    channels: &[usize],
    params: &CodecParams,
    external: Option<&ExternalCodec>,
) -> Result<Layer> {
    params.validate()?;
    if channels.is_empty() {
        return Ok(Layer::empty(*params));
    }
    let (codes, quant) = quantize_group(tensor, channels)?;
    let mosaic = tile(&codes, tensor.height(), tensor.width())?;
    Ok(Layer {
        quant,
        codec: *params,
        payload: encode_mosaic(&mosaic, params, external)?,
    })
}

/// Inverse of [`encode_layer`]: one dequantized plane per channel.
pub fn decode_layer(
    layer: &Layer,
    channels: usize,
    height: usize,
    width: usize,
    external: Option<&ExternalCodec>,
) -> Result<Vec<Vec<f32>>> {
    if channels == 0 {
        if !layer.payload.is_empty() {
            return Err(Error::Format("empty layer carries a payload".into()));
        }
        return Ok(Vec::new());
    }
    let shape = Mosaic::blank(channels, height, width)?;
    let mosaic = decode_mosaic(&layer.payload, &layer.codec, &shape, external)?;
    untile(&mosaic)?
        .iter()
        .map(|codes| dequantize_group(codes, &layer.quant))
        .collect()
}

/// Codes `tensor` as a two-layer stream split by `partition`.
pub fn encode_layers(
    tensor: &FeatureTensor,
    partition: &Partition,
    base: &CodecParams,
    enhancement: &CodecParams,
    external: Option<&ExternalCodec>,
) -> Result<LayeredBitstream> {
    partition.validate(tensor.channels())?;
    let (b, e) = rayon::join(
        || encode_layer(tensor, &partition.base, base, external),
        || encode_layer(tensor, &partition.enhancement, enhancement, external),
    );
    pack(tensor.height(), tensor.width(), partition.clone(), b?, e?)
}

pub fn decode_layers(stream: &LayeredBitstream, external: Option<&ExternalCodec>) -> Result<FeatureTensor> {
    stream.validate()?;
    let (h, w) = (stream.height, stream.width);
    let p = &stream.partition;
    let base = decode_layer(&stream.base, p.base.len(), h, w, external)?;
    let enh = decode_layer(&stream.enhancement, p.enhancement.len(), h, w, external)?;
    let mut planes = vec![Vec::new(); stream.channels()];
    for (&c, plane) in p.base.iter().zip(base).chain(p.enhancement.iter().zip(enh)) {
        planes[c] = plane;
    }
    FeatureTensor::from_channels(h, w, &planes)
}

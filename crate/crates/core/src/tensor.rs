//! Feature tensors, images and task labels, plus the native `PFT1` array
//! format and a `.npy` importer.
//!
//! `PFT1` layout (little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `PFT1`                            |
//! | 4      | 1    | version (1)                             |
//! | 5      | 1    | dtype (0 = float32)                     |
//! | 6      | 2    | height                                  |
//! | 8      | 2    | width                                   |
//! | 10     | 2    | channels                                |
//! | 12     | ..   | payload, channel-major, then row-major  |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PFT_MAGIC: &[u8; 4] = b"PFT1";
pub const PFT_VERSION: u8 = 1;
pub const PFT_DTYPE_F32: u8 = 0;
pub const PFT_HEADER_LEN: usize = 12;

/// Latent feature tensor, `channels` planes of `height x width` 32-bit floats.
///
/// Storage is channel-major so each channel is one contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Validation(format!(
                "tensor dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at element {pos}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    /// Builds a tensor from per-channel planes, all of `height * width` values.
    pub fn from_channels(height: usize, width: usize, planes: &[Vec<f32>]) -> Result<Self> {
        let plane = height * width;
        if let Some(bad) = planes.iter().find(|p| p.len() != plane) {
            return Err(Error::Length {
                expected: plane,
                found: bad.len(),
            });
        }
        Self::new(height, width, planes.len(), planes.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn try_channel(&self, i: usize) -> Result<&[f32]> {
        if i >= self.channels {
            return Err(Error::Index {
                index: i,
                len: self.channels,
            });
        }
        Ok(self.channel(i))
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }

    /// Returns a copy with channel `i` set to zero.
    pub fn zero_channel(&self, i: usize) -> Result<Self> {
        if i >= self.channels {
            return Err(Error::Index {
                index: i,
                len: self.channels,
            });
        }
        let mut out = self.clone();
        let n = self.plane_len();
        out.data[i * n..(i + 1) * n].fill(0.0);
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dims = [self.height, self.width, self.channels];
        let mut out = Vec::with_capacity(PFT_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(PFT_MAGIC);
        out.push(PFT_VERSION);
        out.push(PFT_DTYPE_F32);
        for d in dims {
            let d = u16::try_from(d).map_err(|_| Error::Validation(format!("dimension {d} exceeds u16 range")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != PFT_MAGIC {
            return Err(Error::Format("missing PFT1 magic".into()));
        }
        if bytes.len() < PFT_HEADER_LEN {
            return Err(Error::Length {
                expected: PFT_HEADER_LEN,
                found: bytes.len(),
            });
        }
        if bytes[4] != PFT_VERSION {
            return Err(Error::Format(format!("unsupported PFT version {}", bytes[4])));
        }
        if bytes[5] != PFT_DTYPE_F32 {
            return Err(Error::Format(format!("unsupported PFT dtype {}", bytes[5])));
        }
        let dim = |o: usize| usize::from(u16::from_le_bytes([bytes[o], bytes[o + 1]]));
        let (height, width, channels) = (dim(6), dim(8), dim(10));
        let count = height * width * channels;
        let expected = PFT_HEADER_LEN + count * 4;
        if bytes.len() != expected {
            return Err(Error::Length {
                expected,
                found: bytes.len(),
            });
        }
        let data = bytes[PFT_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(height, width, channels, data)
    }
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureTensor::from_bytes(&bytes)
}

pub fn save_tensor(tensor: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()?).map_err(|e| Error::io(path, e))
}

/// Imports a rank-3 little-endian float32 `.npy` (v1.0) array laid out as
/// `(channels, height, width)`.
pub fn import_npy(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes)
}

pub fn parse_npy(bytes: &[u8]) -> Result<FeatureTensor> {
    const MAGIC: &[u8] = b"\x93NUMPY";
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NUMPY magic".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(Error::Format(format!(
            "unsupported npy version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let header_len = usize::from(u16::from_le_bytes([bytes[8], bytes[9]]));
    let start = 10 + header_len;
    if bytes.len() < start {
        return Err(Error::Length {
            expected: start,
            found: bytes.len(),
        });
    }
    let header = std::str::from_utf8(&bytes[10..start]).map_err(|_| Error::Format("npy header is not ASCII".into()))?;

    let descr = dict_value(header, "descr").ok_or_else(|| Error::Format("npy header lacks 'descr'".into()))?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    if descr != "<f4" {
        return Err(Error::Format(format!("unsupported npy dtype {descr}")));
    }
    let fortran =
        dict_value(header, "fortran_order").ok_or_else(|| Error::Format("npy header lacks 'fortran_order'".into()))?;
    if fortran != "False" {
        return Err(Error::Format("fortran-ordered npy arrays are not supported".into()));
    }
    let shape = dict_value(header, "shape").ok_or_else(|| Error::Format("npy header lacks 'shape'".into()))?;
    let dims: Vec<usize> = shape
        .trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Format(format!("bad npy shape entry {s:?}")))
        })
        .collect::<Result<_>>()?;
    let [channels, height, width] = dims[..] else {
        return Err(Error::Format(format!("npy array must be rank 3, got shape {shape}")));
    };
    let payload = &bytes[start..];
    let expected = channels * height * width * 4;
    if payload.len() != expected {
        return Err(Error::Length {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureTensor::new(height, width, channels, data)
}

/// Extracts the raw text of `key`'s value from a Python dict literal.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let quoted = [format!("'{key}'"), format!("\"{key}\"")];
    let at = quoted
        .iter()
        .find_map(|k| header.find(k.as_str()).map(|i| i + k.len()))?;
    let rest = header[at..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find([',', '}']).unwrap_or(rest.len())
    };
    Some(rest[..end].trim())
}

/// Image with 1 or 3 planes of values in `[0, 1]`, plane-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    planes: usize,
    data: Vec<f32>,
}

impl Image {
    /// Validates the shape and clamps every sample into `[0, 1]`.
    pub fn new(height: usize, width: usize, planes: usize, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        if planes != 1 && planes != 3 {
            return Err(Error::Validation(format!(
                "image must have 1 or 3 planes, got {planes}"
            )));
        }
        let expected = height * width * planes;
        if data.len() != expected {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("image contains non-finite samples".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            planes,
            data,
        })
    }

    pub fn gray(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, p: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[p * n..(p + 1) * n]
    }

    pub fn get(&self, plane: usize, y: usize, x: usize) -> f32 {
        self.data[(plane * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.planes == other.planes
    }

    pub fn transpose(&self) -> Image {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0; self.data.len()];
        for p in 0..self.planes {
            for y in 0..h {
                for x in 0..w {
                    data[(p * w + x) * h + y] = self.get(p, y, x);
                }
            }
        }
        Image {
            height: w,
            width: h,
            planes: self.planes,
            data,
        }
    }

    /// Stores the image as a `PFT1` tensor with one channel per plane.
    pub fn to_tensor(&self) -> Result<FeatureTensor> {
        FeatureTensor::new(self.height, self.width, self.planes, self.data.clone())
    }

    pub fn from_tensor(t: &FeatureTensor) -> Result<Self> {
        Self::new(t.height(), t.width(), t.channels(), t.data().to_vec())
    }
}

/// Class id marking pixels excluded from segmentation scoring.
pub const IGNORE_ID: u8 = 255;

/// Ground truth for the non-private tasks: a segmentation map and a
/// disparity map, both `height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLabels {
    height: usize,
    width: usize,
    num_classes: u8,
    segmentation: Vec<u8>,
    disparity: Vec<f32>,
}

impl TaskLabels {
    pub fn new(
        height: usize,
        width: usize,
        num_classes: u8,
        segmentation: Vec<u8>,
        disparity: Vec<f32>,
    ) -> Result<Self> {
        let n = height * width;
        if n == 0 {
            return Err(Error::Validation("label maps must be non-empty".into()));
        }
        if num_classes == 0 || num_classes == IGNORE_ID {
            return Err(Error::Validation(format!(
                "class count must be in 1..255, got {num_classes}"
            )));
        }
        for len in [segmentation.len(), disparity.len()] {
            if len != n {
                return Err(Error::Length {
                    expected: n,
                    found: len,
                });
            }
        }
        if let Some(&bad) = segmentation.iter().find(|&&c| c >= num_classes && c != IGNORE_ID) {
            return Err(Error::Validation(format!("class id {bad} outside [0, {num_classes})")));
        }
        if disparity.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Validation("disparity must be finite and non-negative".into()));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            segmentation,
            disparity,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> u8 {
        self.num_classes
    }

    pub fn segmentation(&self) -> &[u8] {
        &self.segmentation
    }

    pub fn disparity(&self) -> &[f32] {
        &self.disparity
    }
}

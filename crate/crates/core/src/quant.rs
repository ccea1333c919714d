//! 8-bit min-max quantization of channel groups and mosaic tiling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

pub const QUANT_BITS: u8 = 8;
const LEVELS: f64 = 255.0;

/// Affine range shared by every value of a quantized group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub min: f32,
    pub max: f32,
    pub bits: u8,
}

impl QuantParams {
    pub fn new(min: f32, max: f32) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::Validation(format!("invalid quantization range [{min}, {max}]")));
        }
        Ok(Self {
            min,
            max,
            bits: QUANT_BITS,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits != QUANT_BITS {
            return Err(Error::Validation(format!(
                "only {QUANT_BITS}-bit quantization is supported, got {}",
                self.bits
            )));
        }
        Self::new(self.min, self.max).map(|_| ())
    }

    fn of(values: impl Iterator<Item = f32>) -> Result<Self> {
        let (min, max) = values.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Self::new(min, max)
    }

    /// Code for `v`, rounding half away from zero.
    pub fn code(&self, v: f32) -> u8 {
        if self.min == self.max {
            return 0;
        }
        let range = f64::from(self.max) - f64::from(self.min);
        let q = ((f64::from(v) - f64::from(self.min)) / range * LEVELS).round();
        q.clamp(0.0, LEVELS) as u8
    }

    pub fn value(&self, q: u8) -> f32 {
        if self.min == self.max {
            return self.min;
        }
        let range = f64::from(self.max) - f64::from(self.min);
        (f64::from(self.min) + f64::from(q) / LEVELS * range) as f32
    }

    /// Largest reconstruction error for in-range inputs: half a step.
    pub fn max_error(&self) -> f64 {
        (f64::from(self.max) - f64::from(self.min)) / (2.0 * LEVELS)
    }
}

fn check_indices(tensor: &FeatureTensor, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Argument("channel index list is empty".into()));
    }
    let mut seen = vec![false; tensor.channels()];
    for &i in indices {
        if i >= tensor.channels() {
            return Err(Error::Index {
                index: i,
                len: tensor.channels(),
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Argument(format!("duplicate channel index {i}")));
        }
    }
    Ok(())
}

/// Quantizes the listed channels with one min/max over the whole group.
///
/// Returns one code plane per channel, in the order given.
pub fn quantize_group(tensor: &FeatureTensor, indices: &[usize]) -> Result<(Vec<Vec<u8>>, QuantParams)> {
    check_indices(tensor, indices)?;
    let params = QuantParams::of(indices.iter().flat_map(|&i| tensor.channel(i).iter().copied()))?;
    let codes = indices
        .iter()
        .map(|&i| tensor.channel(i).iter().map(|&v| params.code(v)).collect())
        .collect();
    Ok((codes, params))
}

/// Per-channel variant: every channel gets its own range.
pub fn quantize_per_channel(tensor: &FeatureTensor, indices: &[usize]) -> Result<Vec<(Vec<u8>, QuantParams)>> {
    check_indices(tensor, indices)?;
    indices
        .iter()
        .map(|&i| {
            let ch = tensor.channel(i);
            let params = QuantParams::of(ch.iter().copied())?;
            Ok((ch.iter().map(|&v| params.code(v)).collect(), params))
        })
        .collect()
}

pub fn dequantize_group(codes: &[u8], params: &QuantParams) -> Result<Vec<f32>> {
    params.validate()?;
    Ok(codes.iter().map(|&q| params.value(q)).collect())
}

/// Quantized channels packed into one 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mosaic {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub tile_height: usize,
    pub tile_width: usize,
    /// Row-major, `pixel_height() x pixel_width()`.
    pub pixels: Vec<u8>,
    pub occupied: usize,
}

/// Near-square grid for `n` tiles: `cols = ceil(sqrt(n))`, `rows = ceil(n / cols)`.
pub fn grid_for(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let mut cols = n.isqrt();
    if cols * cols < n {
        cols += 1;
    }
    (n.div_ceil(cols), cols)
}

impl Mosaic {
    pub fn pixel_height(&self) -> usize {
        self.grid_rows * self.tile_height
    }

    pub fn pixel_width(&self) -> usize {
        self.grid_cols * self.tile_width
    }

    /// Empty-geometry mosaic with zero pixels, used when validating
    /// decoded dimensions before the payload is known.
    pub fn blank(occupied: usize, tile_height: usize, tile_width: usize) -> Result<Self> {
        if occupied == 0 || tile_height == 0 || tile_width == 0 {
            return Err(Error::Argument("mosaic needs at least one non-empty tile".into()));
        }
        let (grid_rows, grid_cols) = grid_for(occupied);
        Ok(Self {
            grid_rows,
            grid_cols,
            tile_height,
            tile_width,
            pixels: vec![0; grid_rows * tile_height * grid_cols * tile_width],
            occupied,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.occupied == 0 || self.occupied > self.grid_rows * self.grid_cols {
            return Err(Error::Format(format!(
                "occupied count {} inconsistent with {}x{} grid",
                self.occupied, self.grid_rows, self.grid_cols
            )));
        }
        if grid_for(self.occupied) != (self.grid_rows, self.grid_cols) {
            return Err(Error::Format(format!(
                "{}x{} grid is not the canonical grid for {} tiles",
                self.grid_rows, self.grid_cols, self.occupied
            )));
        }
        let expected = self.pixel_height() * self.pixel_width();
        if self.pixels.len() != expected {
            return Err(Error::Length {
                expected,
                found: self.pixels.len(),
            });
        }
        Ok(())
    }

    fn tile_origin(&self, k: usize) -> (usize, usize) {
        (
            (k / self.grid_cols) * self.tile_height,
            (k % self.grid_cols) * self.tile_width,
        )
    }
}

/// Places `channels` row-major into the near-square grid; spare tiles stay zero.
pub fn tile(channels: &[Vec<u8>], tile_height: usize, tile_width: usize) -> Result<Mosaic> {
    if channels.is_empty() {
        return Err(Error::Argument("cannot tile zero channels".into()));
    }
    let plane = tile_height * tile_width;
    if let Some(bad) = channels.iter().find(|c| c.len() != plane) {
        return Err(Error::Length {
            expected: plane,
            found: bad.len(),
        });
    }
    let mut mosaic = Mosaic::blank(channels.len(), tile_height, tile_width)?;
    let stride = mosaic.pixel_width();
    for (k, ch) in channels.iter().enumerate() {
        let (y0, x0) = mosaic.tile_origin(k);
        for (row, src) in ch.chunks_exact(tile_width).enumerate() {
            let at = (y0 + row) * stride + x0;
            mosaic.pixels[at..at + tile_width].copy_from_slice(src);
        }
    }
    Ok(mosaic)
}

pub fn untile(mosaic: &Mosaic) -> Result<Vec<Vec<u8>>> {
    mosaic.validate()?;
    let stride = mosaic.pixel_width();
    let tw = mosaic.tile_width;
    Ok((0..mosaic.occupied)
        .map(|k| {
            let (y0, x0) = mosaic.tile_origin(k);
            (0..mosaic.tile_height)
                .flat_map(|row| {
                    let at = (y0 + row) * stride + x0;
                    mosaic.pixels[at..at + tw].iter().copied()
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(values: &[f32]) -> FeatureTensor {
        FeatureTensor::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn half_rounds_away() {
        let (codes, p) = quantize_group(&tensor(&[0.0, 0.5, 1.0]), &[0]).unwrap();
        assert_eq!(codes[0], vec![0, 128, 255]);
        assert_eq!((p.min, p.max, p.bits), (0.0, 1.0, 8));
    }

    #[test]
    fn constant_group() {
        let (codes, p) = quantize_group(&tensor(&[0.7, 0.7]), &[0]).unwrap();
        assert_eq!(codes[0], vec![0, 0]);
        assert_eq!(p.min, 0.7);
        assert_eq!(dequantize_group(&codes[0], &p).unwrap(), vec![0.7, 0.7]);
    }

    #[test]
    fn dequantize_endpoints() {
        let p = QuantParams::new(-1.0, 1.0).unwrap();
        assert_eq!(dequantize_group(&[0, 255], &p).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn group_range_spans_channels() {
        let t = FeatureTensor::new(1, 2, 2, vec![0.0, 1.0, -2.0, 2.0]).unwrap();
        let (codes, p) = quantize_group(&t, &[1, 0]).unwrap();
        assert_eq!((p.min, p.max), (-2.0, 2.0));
        assert_eq!(codes[0], vec![0, 255]);
        let per = quantize_per_channel(&t, &[0]).unwrap();
        assert_eq!(per[0].0, vec![0, 255]);
    }

    #[test]
    fn index_errors() {
        let t = tensor(&[1.0]);
        assert!(matches!(quantize_group(&t, &[]), Err(Error::Argument(_))));
        assert!(matches!(quantize_group(&t, &[1]), Err(Error::Index { .. })));
        let t2 = FeatureTensor::zeros(1, 1, 2).unwrap();
        assert!(matches!(quantize_group(&t2, &[1, 1]), Err(Error::Argument(_))));
    }

    #[test]
    fn grid_geometry() {
        assert_eq!(grid_for(256), (16, 16));
        assert_eq!(grid_for(3), (2, 2));
        assert_eq!(grid_for(1), (1, 1));
        assert_eq!(grid_for(179), (13, 14));
        assert_eq!(grid_for(77), (9, 9));
        let planes = vec![vec![7u8; 64 * 32]; 256];
        let m = tile(&planes, 32, 64).unwrap();
        assert_eq!((m.pixel_width(), m.pixel_height()), (1024, 512));
    }

    #[test]
    fn padding_tiles_are_zero() {
        let planes = vec![vec![9u8; 4], vec![8u8; 4], vec![7u8; 4]];
        let m = tile(&planes, 2, 2).unwrap();
        assert_eq!((m.grid_rows, m.grid_cols), (2, 2));
        assert!(m.pixels[10..12].iter().chain(&m.pixels[14..16]).all(|&p| p == 0));
        assert_eq!(untile(&m).unwrap(), planes);
    }

    #[test]
    fn single_channel_is_identity() {
        let plane: Vec<u8> = (0..6).collect();
        let m = tile(std::slice::from_ref(&plane), 2, 3).unwrap();
        assert_eq!(m.pixels, plane);
    }

    #[test]
    fn inconsistent_occupancy() {
        let mut m = tile(&[vec![1u8; 4], vec![2u8; 4]], 2, 2).unwrap();
        m.occupied = 5;
        assert!(matches!(untile(&m), Err(Error::Format(_))));
        m.occupied = 0;
        assert!(matches!(untile(&m), Err(Error::Format(_))));
        assert!(matches!(tile(&[], 2, 2), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn quantization_error_is_half_step(values in prop::collection::vec(-1e3f32..1e3, 1..200)) {
            let (codes, p) = quantize_group(&tensor(&values), &[0]).unwrap();
            let back = dequantize_group(&codes[0], &p).unwrap();
            for (v, r) in values.iter().zip(&back) {
                // one f32 rounding of the reconstructed value on top of the half step
                let slack = f64::from(f32::EPSILON) * f64::from(r.abs());
                prop_assert!((f64::from(*v) - f64::from(*r)).abs() <= p.max_error() + slack);
            }
        }

        #[test]
        fn quantization_is_monotone(a in -10f32..10.0, b in -10f32..10.0, lo in -20f32..-10.0, hi in 10f32..20.0) {
            let p = QuantParams::new(lo, hi).unwrap();
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.code(x) <= p.code(y));
        }

        #[test]
        fn tiling_round_trips(n in 1usize..40, th in 1usize..9, tw in 1usize..9, seed in any::<u64>()) {
            let planes: Vec<Vec<u8>> = (0..n)
                .map(|k| (0..th * tw).map(|i| (seed.wrapping_mul(31).wrapping_add((k * 131 + i) as u64) % 251) as u8).collect())
                .collect();
            let m = tile(&planes, th, tw).unwrap();
            prop_assert_eq!(untile(&m).unwrap(), planes);
            prop_assert_eq!(tile(&untile(&m).unwrap(), th, tw).unwrap(), m);
        }
    }
}

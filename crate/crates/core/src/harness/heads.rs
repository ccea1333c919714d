//! Task heads for the harness. Both read only the coarse average channel
//! and upsample their prediction back to image resolution.

use super::haar::{LL2, SCALE};
use super::scene::{anchor_gray, disparity_of_gray};
use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

fn coarse(t: &FeatureTensor) -> Result<&[f32]> {
    t.try_channel(LL2)
}

fn upsample<T: Copy>(src: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len() * SCALE * SCALE);
    for y in 0..h * SCALE {
        let row = &src[(y / SCALE) * w..(y / SCALE + 1) * w];
        for &v in row {
            out.extend(std::iter::repeat_n(v, SCALE));
        }
    }
    out
}

/// Nearest gray anchor per coarse sample, as an image-resolution class map.
pub fn seg_head(t: &FeatureTensor, classes: u8) -> Result<Vec<u8>> {
    if classes == 0 {
        return Err(Error::Argument("class count must be positive".into()));
    }
    let anchors: Vec<f32> = (0..classes).map(|k| anchor_gray(k, classes)).collect();
    let labels: Vec<u8> = coarse(t)?
        .iter()
        .map(|&v| {
            let mut best = 0;
            for (k, a) in anchors.iter().enumerate() {
                if (v - a).abs() < (v - anchors[best]).abs() {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    Ok(upsample(&labels, t.height(), t.width()))
}

/// Disparity as an affine map of coarse intensity, at image resolution.
pub fn disp_head(t: &FeatureTensor) -> Result<Vec<f32>> {
    let d: Vec<f32> = coarse(t)?.iter().map(|&v| disparity_of_gray(v).max(0.0)).collect();
    Ok(upsample(&d, t.height(), t.width()))
}

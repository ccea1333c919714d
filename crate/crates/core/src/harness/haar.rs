//! Two-level Haar analysis used as a transparent stand-in for a learned
//! edge encoder.
//!
//! For a 2x2 block `[a b; c d]` one level produces
//!
//! ```text
//! LL = (a + b + c + d) / 4    LH = (a + b - c - d) / 4
//! HL = (a - b + c - d) / 4    HH = (a - b - c + d) / 4
//! ```
//!
//! Level 2 repeats this on LL. All subbands are packed into 16 channels of
//! `H/4 x W/4`: the level-2 bands directly and every level-1 band as four
//! polyphase components.

use crate::error::{Error, Result};
use crate::tensor::{FeatureTensor, Image};

pub const LEVELS: usize = 2;
pub const SCALE: usize = 1 << LEVELS;
pub const CHANNELS: usize = 16;

/// Coarsest average band, the only channel the task heads read.
pub const LL2: usize = 0;
/// Level-2 detail bands (LH, HL, HH).
pub const COARSE_DETAIL: [usize; 3] = [1, 2, 3];
/// Level-1 bands, four polyphase channels each.
pub const FINE_LH: [usize; 4] = [4, 5, 6, 7];
pub const FINE_HL: [usize; 4] = [8, 9, 10, 11];
pub const FINE_HH: [usize; 4] = [12, 13, 14, 15];

/// Splits one plane into `(LL, LH, HL, HH)` at half resolution.
fn analyze(src: &[f32], h: usize, w: usize) -> [Vec<f32>; 4] {
    let (h2, w2) = (h / 2, w / 2);
    let mut bands: [Vec<f32>; 4] = std::array::from_fn(|_| vec![0.0; h2 * w2]);
    for y in 0..h2 {
        for x in 0..w2 {
            let a = src[2 * y * w + 2 * x];
            let b = src[2 * y * w + 2 * x + 1];
            let c = src[(2 * y + 1) * w + 2 * x];
            let d = src[(2 * y + 1) * w + 2 * x + 1];
            let i = y * w2 + x;
            bands[0][i] = (a + b + c + d) / 4.0;
            bands[1][i] = (a + b - c - d) / 4.0;
            bands[2][i] = (a - b + c - d) / 4.0;
            bands[3][i] = (a - b - c + d) / 4.0;
        }
    }
    bands
}

fn synthesize(bands: [&[f32]; 4], h2: usize, w2: usize) -> Vec<f32> {
    let w = 2 * w2;
    let mut out = vec![0.0; 4 * h2 * w2];
    for y in 0..h2 {
        for x in 0..w2 {
            let i = y * w2 + x;
            let (ll, lh, hl, hh) = (bands[0][i], bands[1][i], bands[2][i], bands[3][i]);
            out[2 * y * w + 2 * x] = ll + lh + hl + hh;
            out[2 * y * w + 2 * x + 1] = ll + lh - hl - hh;
            out[(2 * y + 1) * w + 2 * x] = ll - lh + hl - hh;
            out[(2 * y + 1) * w + 2 * x + 1] = ll - lh - hl + hh;
        }
    }
    out
}

/// Polyphase component `p = 2 * dy + dx` of a half-resolution band.
fn polyphase(band: &[f32], h2: usize, w2: usize, p: usize) -> Vec<f32> {
    let (dy, dx) = (p / 2, p % 2);
    let (h4, w4) = (h2 / 2, w2 / 2);
    let mut out = Vec::with_capacity(h4 * w4);
    for y in 0..h4 {
        for x in 0..w4 {
            out.push(band[(2 * y + dy) * w2 + 2 * x + dx]);
        }
    }
    out
}

fn interleave(parts: &[&[f32]], h4: usize, w4: usize) -> Vec<f32> {
    let w2 = 2 * w4;
    let mut band = vec![0.0; 4 * h4 * w4];
    for (p, part) in parts.iter().enumerate() {
        let (dy, dx) = (p / 2, p % 2);
        for y in 0..h4 {
            for x in 0..w4 {
                band[(2 * y + dy) * w2 + 2 * x + dx] = part[y * w4 + x];
            }
        }
    }
    band
}

/// Exactly invertible feature encoder/decoder for gray images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HarnessModel;

impl HarnessModel {
    pub fn encode(&self, img: &Image) -> Result<FeatureTensor> {
        let (h, w) = (img.height(), img.width());
        if img.planes() != 1 || h % SCALE != 0 || w % SCALE != 0 {
            return Err(Error::Argument(format!(
                "harness encoder needs a gray image with sides divisible by {SCALE}, got {h}x{w}x{}",
                img.planes()
            )));
        }
        let [ll1, lh1, hl1, hh1] = analyze(img.data(), h, w);
        let (h2, w2) = (h / 2, w / 2);
        let [ll2, lh2, hl2, hh2] = analyze(&ll1, h2, w2);
        let mut planes = vec![ll2, lh2, hl2, hh2];
        for band in [&lh1, &hl1, &hh1] {
            planes.extend((0..4).map(|p| polyphase(band, h2, w2, p)));
        }
        FeatureTensor::from_channels(h / SCALE, w / SCALE, &planes)
    }

    /// Inverse of [`HarnessModel::encode`]. The result is clamped into `[0, 1]`.
    pub fn decode(&self, t: &FeatureTensor) -> Result<Image> {
        if t.channels() != CHANNELS {
            return Err(Error::Argument(format!(
                "harness decoder needs {CHANNELS} channels, got {}",
                t.channels()
            )));
        }
        let (h4, w4) = (t.height(), t.width());
        let ch = |i: usize| t.channel(i);
        let ll1 = synthesize([ch(0), ch(1), ch(2), ch(3)], h4, w4);
        let fine = |group: [usize; 4]| {
            let parts: Vec<&[f32]> = group.iter().map(|&i| ch(i)).collect();
            interleave(&parts, h4, w4)
        };
        let (lh1, hl1, hh1) = (fine(FINE_LH), fine(FINE_HL), fine(FINE_HH));
        let out = synthesize([&ll1, &lh1, &hl1, &hh1], 2 * h4, 2 * w4);
        Image::gray(SCALE * h4, SCALE * w4, out)
    }
}

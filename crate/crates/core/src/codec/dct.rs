//! Internal block codec: 8x8 integer DCT-II, uniform scalar quantization,
//! zigzag scan and a deflate entropy stage.
//!
//! The transform is the orthonormal DCT-II factored into plane rotations,
//! each applied as three integer lifting steps. It maps integers to
//! integers and is exactly invertible, so a quantizer step of 1 is lossless
//! while coefficient magnitudes stay on the orthonormal scale.

use std::io::{Read, Write};
use std::sync::OnceLock;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::quant::Mosaic;

pub const BLOCK: usize = 8;
const AREA: usize = BLOCK * BLOCK;
const FRAC_BITS: u32 = 14;
const HALF: i64 = 1 << (FRAC_BITS - 1);

#[derive(Debug, Clone, Copy)]
struct Lifting {
    i: usize,
    j: usize,
    negate: bool,
    /// `(cos - 1) / sin` in Q14.
    p: i64,
    /// `sin` in Q14.
    u: i64,
}

#[derive(Debug)]
struct IntDct {
    signs: [bool; BLOCK],
    /// Rotations in application order for the forward transform.
    steps: Vec<Lifting>,
}

fn dct_matrix() -> [[f64; BLOCK]; BLOCK] {
    let mut m = [[0.0; BLOCK]; BLOCK];
    for (k, row) in m.iter_mut().enumerate() {
        let alpha = if k == 0 {
            (1.0 / BLOCK as f64).sqrt()
        } else {
            (2.0 / BLOCK as f64).sqrt()
        };
        for (n, v) in row.iter_mut().enumerate() {
            *v = alpha * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * BLOCK) as f64).cos();
        }
    }
    m
}

fn q14(v: f64) -> i64 {
    (v * f64::from(1u32 << FRAC_BITS)).round() as i64
}

impl IntDct {
    /// Reduces the DCT matrix to a signed identity with Givens rotations
    /// `G_m..G_1 C = D`, so that `C = G_1^T .. G_m^T D`.
    fn build() -> Self {
        let mut m = dct_matrix();
        let mut rotations = Vec::new();
        for col in 0..BLOCK {
            for row in col + 1..BLOCK {
                let (a, b) = (m[col][col], m[row][col]);
                if b.abs() < 1e-15 {
                    continue;
                }
                let r = a.hypot(b);
                let (c, s) = (a / r, b / r);
                // two rows of `m` change together
                #[allow(clippy::needless_range_loop)]
                for k in 0..BLOCK {
                    let (x, y) = (m[col][k], m[row][k]);
                    m[col][k] = c * x + s * y;
                    m[row][k] = -s * x + c * y;
                }
                rotations.push((col, row, s.atan2(c)));
            }
        }
        let signs = std::array::from_fn(|k| m[k][k] < 0.0);
        // forward order: D first, then G_m^T .. G_1^T
        let steps = rotations
            .into_iter()
            .rev()
            .map(|(i, j, theta)| {
                let (mut c, mut s) = (theta.cos(), theta.sin());
                let negate = c < 0.0;
                if negate {
                    c = -c;
                    s = -s;
                }
                let p = if s.abs() < 1e-15 { 0.0 } else { (c - 1.0) / s };
                Lifting {
                    i,
                    j,
                    negate,
                    p: q14(p),
                    u: q14(s),
                }
            })
            .collect();
        Self { signs, steps }
    }

    fn get() -> &'static IntDct {
        static DCT: OnceLock<IntDct> = OnceLock::new();
        DCT.get_or_init(IntDct::build)
    }

    fn forward(&self, v: &mut [i32; BLOCK]) {
        for (x, &neg) in v.iter_mut().zip(&self.signs) {
            if neg {
                *x = -*x;
            }
        }
        for s in &self.steps {
            let (mut a, mut b) = (i64::from(v[s.i]), i64::from(v[s.j]));
            if s.negate {
                a = -a;
                b = -b;
            }
            a += lift(s.p, b);
            b += lift(s.u, a);
            a += lift(s.p, b);
            v[s.i] = a as i32;
            v[s.j] = b as i32;
        }
    }

    fn inverse(&self, v: &mut [i32; BLOCK]) {
        for s in self.steps.iter().rev() {
            let (mut a, mut b) = (i64::from(v[s.i]), i64::from(v[s.j]));
            a -= lift(s.p, b);
            b -= lift(s.u, a);
            a -= lift(s.p, b);
            if s.negate {
                a = -a;
                b = -b;
            }
            v[s.i] = a as i32;
            v[s.j] = b as i32;
        }
        for (x, &neg) in v.iter_mut().zip(&self.signs) {
            if neg {
                *x = -*x;
            }
        }
    }
}

fn lift(coef: i64, x: i64) -> i64 {
    (coef * x + HALF) >> FRAC_BITS
}

/// Forward 2-D transform of one block, rows then columns.
pub fn forward_block(block: &mut [i32; AREA]) {
    let dct = IntDct::get();
    let mut line = [0i32; BLOCK];
    for r in 0..BLOCK {
        line.copy_from_slice(&block[r * BLOCK..(r + 1) * BLOCK]);
        dct.forward(&mut line);
        block[r * BLOCK..(r + 1) * BLOCK].copy_from_slice(&line);
    }
    for c in 0..BLOCK {
        for r in 0..BLOCK {
            line[r] = block[r * BLOCK + c];
        }
        dct.forward(&mut line);
        for r in 0..BLOCK {
            block[r * BLOCK + c] = line[r];
        }
    }
}

pub fn inverse_block(block: &mut [i32; AREA]) {
    let dct = IntDct::get();
    let mut line = [0i32; BLOCK];
    for c in 0..BLOCK {
        for r in 0..BLOCK {
            line[r] = block[r * BLOCK + c];
        }
        dct.inverse(&mut line);
        for r in 0..BLOCK {
            block[r * BLOCK + c] = line[r];
        }
    }
    for r in 0..BLOCK {
        line.copy_from_slice(&block[r * BLOCK..(r + 1) * BLOCK]);
        dct.inverse(&mut line);
        block[r * BLOCK..(r + 1) * BLOCK].copy_from_slice(&line);
    }
}

/// Zigzag scan order: position `k` of the scan reads raster index `ZIGZAG[k]`.
pub fn zigzag() -> &'static [usize; AREA] {
    static ORDER: OnceLock<[usize; AREA]> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut order = [0; AREA];
        let mut k = 0;
        for d in 0..(2 * BLOCK - 1) {
            let cells: Vec<(usize, usize)> = (0..BLOCK)
                .filter_map(|r| d.checked_sub(r).filter(|&c| c < BLOCK).map(|c| (r, c)))
                .collect();
            let iter: Box<dyn Iterator<Item = &(usize, usize)>> = if d % 2 == 0 {
                Box::new(cells.iter().rev())
            } else {
                Box::new(cells.iter())
            };
            for &(r, c) in iter {
                order[k] = r * BLOCK + c;
                k += 1;
            }
        }
        order
    })
}

/// Quantizer step for `qp`: `2^((qp - 4) / 6)`.
pub fn qstep(qp: u8) -> f64 {
    2f64.powf((f64::from(qp) - 4.0) / 6.0)
}

fn quantize(coef: i32, step: f64) -> i32 {
    (f64::from(coef) / step).round() as i32
}

fn dequantize(level: i32, step: f64) -> i32 {
    (f64::from(level) * step).round() as i32
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_signed(out: &mut Vec<u8>, v: i32) {
    put_varint(out, ((v << 1) ^ (v >> 31)) as u32 as u64);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self
                .bytes
                .get(self.at)
                .ok_or_else(|| Error::Decode("coefficient stream ends early".into()))?;
            self.at += 1;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Decode("overlong varint".into()))
    }

    fn signed(&mut self) -> Result<i32> {
        let z = u32::try_from(self.varint()?).map_err(|_| Error::Decode("coefficient out of range".into()))?;
        Ok(((z >> 1) as i32) ^ -((z & 1) as i32))
    }
}

fn padded(n: usize) -> usize {
    n.div_ceil(BLOCK) * BLOCK
}

/// Encodes a mosaic at quantizer step `2^((qp - 4) / 6)`.
pub fn encode(mosaic: &Mosaic, qp: u8) -> Result<Vec<u8>> {
    mosaic.validate()?;
    let (h, w) = (mosaic.pixel_height(), mosaic.pixel_width());
    let step = qstep(qp);
    let zz = zigzag();
    let mut stream = Vec::new();
    for by in (0..padded(h)).step_by(BLOCK) {
        for bx in (0..padded(w)).step_by(BLOCK) {
            let mut block = [0i32; AREA];
            for r in 0..BLOCK {
                let y = (by + r).min(h - 1);
                for c in 0..BLOCK {
                    let x = (bx + c).min(w - 1);
                    block[r * BLOCK + c] = i32::from(mosaic.pixels[y * w + x]) - 128;
                }
            }
            forward_block(&mut block);
            let levels: Vec<i32> = zz.iter().map(|&i| quantize(block[i], step)).collect();
            let len = levels.iter().rposition(|&l| l != 0).map_or(0, |p| p + 1);
            put_varint(&mut stream, len as u64);
            for &l in &levels[..len] {
                put_signed(&mut stream, l);
            }
        }
    }
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&stream)?;
    Ok(enc.finish()?)
}

/// Decodes a payload produced by [`encode`] into a mosaic shaped like `shape`.
pub fn decode(bytes: &[u8], qp: u8, shape: &Mosaic) -> Result<Mosaic> {
    let (h, w) = (shape.pixel_height(), shape.pixel_width());
    let blocks = (padded(h) / BLOCK) * (padded(w) / BLOCK);
    // worst case: a length byte plus 64 five-byte varints per block
    let limit = (blocks * (1 + AREA * 5)) as u64;
    let mut stream = Vec::new();
    DeflateDecoder::new(bytes)
        .take(limit + 1)
        .read_to_end(&mut stream)
        .map_err(|e| Error::Decode(format!("entropy stage: {e}")))?;
    if stream.len() as u64 > limit {
        return Err(Error::Decode("coefficient stream too long".into()));
    }

    let step = qstep(qp);
    let zz = zigzag();
    let mut cur = Cursor { bytes: &stream, at: 0 };
    let mut pixels = vec![0u8; h * w];
    for by in (0..padded(h)).step_by(BLOCK) {
        for bx in (0..padded(w)).step_by(BLOCK) {
            let len = cur.varint()?;
            if len > AREA as u64 {
                return Err(Error::Decode(format!("block claims {len} coefficients")));
            }
            let mut block = [0i32; AREA];
            for &idx in &zz[..len as usize] {
                block[idx] = dequantize(cur.signed()?, step);
            }
            inverse_block(&mut block);
            for r in 0..BLOCK.min(h - by) {
                for c in 0..BLOCK.min(w - bx) {
                    let v = block[r * BLOCK + c] + 128;
                    pixels[(by + r) * w + bx + c] = v.clamp(0, 255) as u8;
                }
            }
        }
    }
    if cur.at != stream.len() {
        return Err(Error::Decode("trailing data after last block".into()));
    }
    Ok(Mosaic {
        pixels,
        ..shape.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transform_is_exactly_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let orig: [i32; AREA] = std::array::from_fn(|_| rng.random_range(-128..128));
            let mut b = orig;
            forward_block(&mut b);
            inverse_block(&mut b);
            assert_eq!(b, orig);
        }
    }

    #[test]
    fn transform_approximates_orthonormal_dct() {
        let c = dct_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: [i32; AREA] = std::array::from_fn(|_| rng.random_range(-128..128));
        let mut got = x;
        forward_block(&mut got);
        for u in 0..BLOCK {
            for v in 0..BLOCK {
                let mut want = 0.0;
                for r in 0..BLOCK {
                    for s in 0..BLOCK {
                        want += c[u][r] * c[v][s] * f64::from(x[r * BLOCK + s]);
                    }
                }
                let e = (f64::from(got[u * BLOCK + v]) - want).abs();
                assert!(e < 6.0, "coef ({u},{v}): {} vs {want}", got[u * BLOCK + v]);
            }
        }
        // DC of a constant block is 8x its value; lifting rounding leaks a
        // few units into the AC terms
        let mut flat = [10i32; AREA];
        forward_block(&mut flat);
        assert!((flat[0] - 80).abs() <= 1);
        assert!(flat[1..].iter().all(|v| v.abs() < 6), "{flat:?}");
    }

    #[test]
    fn zigzag_is_permutation_starting_like_jpeg() {
        let z = zigzag();
        assert_eq!(&z[..6], &[0, 1, 8, 16, 9, 2]);
        assert_eq!(z[63], 63);
        let mut s = z.to_vec();
        s.sort_unstable();
        assert_eq!(s, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn qstep_law() {
        assert_eq!(qstep(4), 1.0);
        assert!((qstep(10) - 2.0).abs() < 1e-12);
        assert!((qstep(40) - 64.0).abs() < 1e-9);
    }

    #[test]
    fn varint_signed_round_trip() {
        let mut out = Vec::new();
        for v in [0, 1, -1, 63, -64, 1000, -100_000, i32::MAX, i32::MIN] {
            put_signed(&mut out, v);
        }
        let mut cur = Cursor { bytes: &out, at: 0 };
        for v in [0, 1, -1, 63, -64, 1000, -100_000, i32::MAX, i32::MIN] {
            assert_eq!(cur.signed().unwrap(), v);
        }
    }
}

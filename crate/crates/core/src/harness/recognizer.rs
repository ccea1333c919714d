//! Glyph font, plate geometry and the template-matching recognizer.
//!
//! Glyph ink is drawn as a pixel-level checker on top of the local
//! background, one 2x2 block per glyph pixel. The recognizer demodulates
//! each block with `(a - b - c + d) / 4`, which cancels the background and
//! anything smoother than the checker, then correlates the resulting 5x7
//! ink map against every template.

use crate::metrics::BBox;
use crate::tensor::Image;

pub const ALPHABET: [char; 8] = ['0', '1', '2', '3', '4', '5', '6', '7'];
pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;
pub const GLYPH_SCALE: usize = 2;
/// Horizontal pitch of glyph slots in pixels.
pub const CELL: usize = 12;
pub const MARGIN: usize = 2;
pub const PLATE_H: usize = 2 * MARGIN + GLYPH_H * GLYPH_SCALE;
pub const MIN_NCC: f64 = 0.6;

const FONT: [[&str; GLYPH_H]; 8] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
];

/// 5x7 bitmap of `symbol`, row-major, or `None` outside the alphabet.
pub fn glyph(symbol: char) -> Option<[bool; GLYPH_W * GLYPH_H]> {
    let k = ALPHABET.iter().position(|&c| c == symbol)?;
    let mut out = [false; GLYPH_W * GLYPH_H];
    for (r, row) in FONT[k].iter().enumerate() {
        for (c, b) in row.bytes().enumerate() {
            out[r * GLYPH_W + c] = b == b'1';
        }
    }
    Some(out)
}

/// Plate width for `n` glyphs.
pub fn plate_width(n: usize) -> usize {
    MARGIN + CELL * n
}

/// Number of glyph slots a plate box can hold.
pub fn slots(bbox: &BBox) -> usize {
    (bbox.w as usize).saturating_sub(MARGIN) / CELL
}

/// Top-left pixel of glyph slot `k`.
pub fn slot_origin(bbox: &BBox, k: usize) -> (usize, usize) {
    (bbox.y as usize + MARGIN, bbox.x as usize + MARGIN + CELL * k)
}

fn ink_map(img: &Image, y0: usize, x0: usize) -> Option<[f64; GLYPH_W * GLYPH_H]> {
    if y0 + GLYPH_H * GLYPH_SCALE > img.height() || x0 + GLYPH_W * GLYPH_SCALE > img.width() {
        return None;
    }
    let mut m = [0.0; GLYPH_W * GLYPH_H];
    for r in 0..GLYPH_H {
        for c in 0..GLYPH_W {
            let (y, x) = (y0 + 2 * r, x0 + 2 * c);
            let px = |dy, dx| f64::from(img.get(0, y + dy, x + dx));
            m[r * GLYPH_W + c] = (px(0, 0) - px(0, 1) - px(1, 0) + px(1, 1)) / 4.0;
        }
    }
    Some(m)
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    (c, norm)
}

fn templates() -> &'static [(char, Vec<f64>, f64)] {
    static T: std::sync::OnceLock<Vec<(char, Vec<f64>, f64)>> = std::sync::OnceLock::new();
    T.get_or_init(|| {
        ALPHABET
            .iter()
            .map(|&s| {
                let bits: Vec<f64> = glyph(s)
                    .expect("alphabet symbol")
                    .iter()
                    .map(|&b| f64::from(u8::from(b)))
                    .collect();
                let (c, n) = centered(&bits);
                (s, c, n)
            })
            .collect()
    })
}

/// Reads one glyph slot; `None` when no template correlates well enough.
pub fn recognize_slot(img: &Image, y0: usize, x0: usize) -> Option<char> {
    let (m, norm) = centered(&ink_map(img, y0, x0)?);
    if norm < 1e-9 {
        return None;
    }
    let (best, score) = templates()
        .iter()
        .map(|(s, t, tn)| {
            let dot: f64 = m.iter().zip(t).map(|(a, b)| a * b).sum();
            (*s, dot / (norm * tn))
        })
        .fold(('?', f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    (score >= MIN_NCC).then_some(best)
}

/// Reads every box of `img`, one string per box.
pub fn recognize_glyphs(img: &Image, boxes: &[BBox]) -> Vec<String> {
    boxes
        .iter()
        .map(|b| {
            (0..slots(b))
                .filter_map(|k| {
                    let (y, x) = slot_origin(b, k);
                    recognize_slot(img, y, x)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn font_is_distinct_and_ncc_separates() {
        let t = templates();
        for i in 0..t.len() {
            for j in 0..t.len() {
                let ncc: f64 = t[i].1.iter().zip(&t[j].1).map(|(a, b)| a * b).sum::<f64>() / (t[i].2 * t[j].2);
                if i == j {
                    assert!((ncc - 1.0).abs() < 1e-12);
                } else {
                    assert!(ncc < 0.9, "{} vs {}: {ncc}", t[i].0, t[j].0);
                }
            }
        }
        assert!(glyph('8').is_none());
    }

    #[test]
    fn plate_geometry() {
        assert_eq!(PLATE_H, 18);
        let b = BBox::new(10, 20, plate_width(5) as u32, PLATE_H as u32);
        assert_eq!(slots(&b), 5);
        assert_eq!(slot_origin(&b, 2), (22, 36));
    }

    #[test]
    fn blank_image_reads_nothing() {
        let img = Image::gray(40, 80, vec![0.0; 3200]).unwrap();
        let b = BBox::new(2, 2, plate_width(4) as u32, PLATE_H as u32);
        assert_eq!(recognize_glyphs(&img, &[b]), vec![String::new()]);
    }
}

//! Seeded synthetic scenes: Voronoi regions of constant gray and disparity,
//! fine vertical texture, sensor noise and glyph plates.

use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::haar::SCALE;
use super::recognizer::{glyph, plate_width, ALPHABET, GLYPH_H, GLYPH_W, PLATE_H};
use crate::error::{Error, Result};
use crate::metrics::{BBox, PlateAnnotation};
use crate::tensor::{Image, TaskLabels};

const PLACEMENT_TRIES: usize = 500;
const PLATE_GAP: usize = 2;

/// Gray level of class `k` out of `classes`, spread evenly over `[0.2, 0.8]`.
pub fn anchor_gray(k: u8, classes: u8) -> f32 {
    if classes <= 1 {
        return 0.5;
    }
    0.2 + 0.6 * f32::from(k) / f32::from(classes - 1)
}

/// Disparity paired with a gray level; maps `[0.2, 0.8]` onto `[0.1, 1.0]`.
pub fn disparity_of_gray(g: f32) -> f32 {
    0.1 + 1.5 * (g - 0.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Number of regions, each its own segmentation class.
    pub regions: u8,
    pub plates: usize,
    /// Amplitude of the glyph checker.
    pub ink: f32,
    /// Standard deviation of additive Gaussian sensor noise.
    pub noise: f32,
    /// Peak amplitude of the per-block vertical texture.
    pub texture: f32,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            height: 128,
            width: 256,
            regions: 4,
            plates: 3,
            ink: 0.02,
            noise: 0.004,
            texture: 0.15,
        }
    }
}

impl SceneSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(SCALE)
            || !self.width.is_multiple_of(SCALE)
        {
            return Err(Error::Argument(format!(
                "scene size {}x{} must be positive multiples of {SCALE}",
                self.height, self.width
            )));
        }
        let blocks = (self.height / SCALE) * (self.width / SCALE);
        if self.regions == 0 || usize::from(self.regions) > blocks.min(64) {
            return Err(Error::Argument(format!(
                "region count {} outside 1..={}",
                self.regions,
                blocks.min(64)
            )));
        }
        for (name, v) in [("ink", self.ink), ("noise", self.noise), ("texture", self.texture)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Argument(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub image: Image,
    pub labels: TaskLabels,
    pub plates: Vec<PlateAnnotation>,
}

pub fn scene_id(seed: u64) -> String {
    format!("scene_{seed:04}")
}

fn overlaps(a: &BBox, b: &BBox) -> bool {
    let g = PLATE_GAP as u32;
    a.x < b.x + b.w + g && b.x < a.x + a.w + g && a.y < b.y + b.h + g && b.y < a.y + a.h + g
}

/// Renders the scene for `spec`; identical specs give identical scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w) = (spec.height, spec.width);
    let (hb, wb) = (h / SCALE, w / SCALE);

    // Voronoi cells over the block grid, so region edges never split a block.
    let mut sites: Vec<(usize, usize)> = Vec::new();
    while sites.len() < usize::from(spec.regions) {
        let s = (rng.random_range(0..hb), rng.random_range(0..wb));
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    let block_class: Vec<u8> = (0..hb * wb)
        .map(|i| {
            let (y, x) = (i / wb, i % wb);
            let d = |&(sy, sx): &(usize, usize)| sy.abs_diff(y).pow(2) + sx.abs_diff(x).pow(2);
            (0..sites.len()).min_by_key(|&k| (d(&sites[k]), k)).unwrap_or(0) as u8
        })
        .collect();
    let texture: Vec<f32> = (0..hb * wb)
        .map(|_| {
            if spec.texture > 0.0 {
                rng.random_range(-spec.texture..=spec.texture)
            } else {
                0.0
            }
        })
        .collect();

    let mut pixels = vec![0f32; h * w];
    let mut seg = vec![0u8; h * w];
    let mut disp = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let b = (y / SCALE) * wb + x / SCALE;
            let k = block_class[b];
            let g = anchor_gray(k, spec.regions);
            let stripe = if y % SCALE < SCALE / 2 { 1.0 } else { -1.0 };
            pixels[y * w + x] = g + stripe * texture[b];
            seg[y * w + x] = k;
            disp[y * w + x] = disparity_of_gray(g);
        }
    }

    let id = scene_id(spec.seed);
    let mut plates: Vec<PlateAnnotation> = Vec::new();
    for _ in 0..spec.plates {
        let n = rng.random_range(4..=6);
        let text: String = (0..n).map(|_| *ALPHABET.choose(&mut rng).unwrap_or(&'0')).collect();
        let (pw, ph) = (plate_width(n), PLATE_H);
        if pw > w || ph > h {
            return Err(Error::Placement(format!(
                "{pw}x{ph} plate does not fit a {w}x{h} scene"
            )));
        }
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let x = 2 * rng.random_range(0..=(w - pw) / 2);
            let y = 2 * rng.random_range(0..=(h - ph) / 2);
            let b = BBox::new(x as u32, y as u32, pw as u32, ph as u32);
            if !plates.iter().any(|p| overlaps(&p.bbox, &b)) {
                placed = Some(b);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| {
            Error::Placement(format!(
                "no room for plate {} of {} in {id}",
                plates.len() + 1,
                spec.plates
            ))
        })?;
        draw_plate(&mut pixels, w, &bbox, &text, spec.ink);
        plates.push(PlateAnnotation {
            image_id: id.clone(),
            bbox,
            text,
            readable: true,
        });
    }

    if spec.noise > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise).map_err(|e| Error::Argument(format!("noise: {e}")))?;
        for p in &mut pixels {
            *p += normal.sample(&mut rng);
        }
    }

    Ok(Scene {
        image: Image::gray(h, w, pixels)?,
        labels: TaskLabels::new(h, w, spec.regions, seg, disp)?,
        plates,
        id,
    })
}

fn draw_plate(pixels: &mut [f32], w: usize, bbox: &BBox, text: &str, ink: f32) {
    for (k, ch) in text.chars().enumerate() {
        let Some(bits) = glyph(ch) else { continue };
        let (y0, x0) = super::recognizer::slot_origin(bbox, k);
        for r in 0..GLYPH_H {
            for c in 0..GLYPH_W {
                if !bits[r * GLYPH_W + c] {
                    continue;
                }
                for (dy, dx, s) in [(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)] {
                    pixels[(y0 + 2 * r + dy) * w + x0 + 2 * c + dx] += s * ink;
                }
            }
        }
    }
}

/// Scenes for seeds `first_seed .. first_seed + count`, generated in parallel.
pub fn generate_corpus(spec: &SceneSpec, first_seed: u64, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_scene(&spec.with_seed(first_seed + i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::recognizer::recognize_glyphs;

    #[test]
    fn deterministic_per_seed() {
        let s = SceneSpec::default().with_seed(5);
        let a = generate_scene(&s).unwrap();
        let b = generate_scene(&s).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.plates, b.plates);
        let c = generate_scene(&s.with_seed(6)).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn labels_and_plates_are_consistent() {
        let s = generate_scene(&SceneSpec::default().with_seed(11)).unwrap();
        let mut ids: Vec<u8> = s.labels.segmentation().to_vec();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert!(s
            .labels
            .disparity()
            .iter()
            .all(|&d| (0.1 - 1e-6..=1.0 + 1e-6).contains(&d)));
        for p in &s.plates {
            p.validate(256, 128).unwrap();
            assert!((4..=6).contains(&p.text.len()));
            assert_eq!(p.bbox.x % 2, 0);
            assert_eq!(p.bbox.y % 2, 0);
        }
        let texts: Vec<String> = s.plates.iter().map(|p| p.text.clone()).collect();
        let boxes: Vec<BBox> = s.plates.iter().map(|p| p.bbox).collect();
        assert_eq!(recognize_glyphs(&s.image, &boxes), texts);
    }

    #[test]
    fn overfull_scene_fails_placement() {
        let spec = SceneSpec {
            height: 40,
            width: 80,
            plates: 12,
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec), Err(Error::Placement(_))));
    }
}

//! Evaluation metrics and the licence-plate annotation schema.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Image;

/// Mean squared difference of two equally long sample slices.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Argument("empty input".into()));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// MSE and PSNR (dB, unit peak) between two images. Identical images give
/// `f64::INFINITY` for the PSNR.
pub fn mse_psnr(a: &Image, b: &Image) -> Result<(f64, f64)> {
    if !a.same_shape(b) {
        return Err(Error::Argument(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.planes(),
            b.height(),
            b.width(),
            b.planes()
        )));
    }
    let m = mse(a.data(), b.data())?;
    Ok((m, psnr_from_mse(m, 1.0)))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn rmse(pred: &[f32], gt: &[f32]) -> Result<f64> {
    mse(pred, gt).map(f64::sqrt)
}

/// Mean intersection-over-union over the classes present in `gt`.
///
/// Pixels whose ground truth equals `ignore` are skipped; a prediction
/// outside `0..classes` counts as a miss for the true class.
pub fn miou(pred: &[u8], gt: &[u8], classes: usize, ignore: u8) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Argument(format!(
            "map sizes differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fne = vec![0u64; classes];
    let mut present = vec![false; classes];
    let mut valid = 0u64;
    for (&p, &g) in pred.iter().zip(gt) {
        if g == ignore {
            continue;
        }
        let g = usize::from(g);
        if g >= classes {
            return Err(Error::Argument(format!("ground-truth id {g} >= {classes}")));
        }
        valid += 1;
        present[g] = true;
        let p = usize::from(p);
        if p == g {
            tp[g] += 1;
        } else {
            fne[g] += 1;
            if p < classes {
                fp[p] += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::NoValidPixels);
    }
    let ious: Vec<f64> = (0..classes)
        .filter(|&c| present[c])
        .map(|c| tp[c] as f64 / (tp[c] + fp[c] + fne[c]) as f64)
        .collect();
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Unit-cost edit distance between two strings, counted in characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = u64::from(x1 - x0) * u64::from(y1 - y0);
        inter as f64 / (self.area() + other.area() - inter) as f64
    }
}

// Serialized as `[x, y, w, h]`.
impl Serialize for BBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, w, h] = <[u32; 4]>::deserialize(d)?;
        Ok(BBox { x, y, w, h })
    }
}

/// Ground truth for one licence plate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateAnnotation {
    pub image_id: String,
    pub bbox: BBox,
    pub text: String,
    pub readable: bool,
}

impl PlateAnnotation {
    pub fn validate(&self, image_width: u32, image_height: u32) -> Result<()> {
        if !self.readable && !self.text.is_empty() {
            return Err(Error::Validation(format!(
                "unreadable plate in {} carries text {:?}",
                self.image_id, self.text
            )));
        }
        if self.readable && self.text.is_empty() {
            return Err(Error::Validation(format!(
                "readable plate in {} has no text",
                self.image_id
            )));
        }
        let b = &self.bbox;
        if b.w == 0 || b.h == 0 || b.x + b.w > image_width || b.y + b.h > image_height {
            return Err(Error::Validation(format!(
                "plate box {:?} outside {image_width}x{image_height} image {}",
                b, self.image_id
            )));
        }
        Ok(())
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<PlateAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_annotations(annotations: &[PlateAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(annotations)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the flat interchange form `image_id,x,y,w,h,text` (one plate per
/// line, `#` comments allowed). An empty text or the literal `unreadable`
/// marks a plate that has no ground-truth characters.
pub fn convert_plate_list<R: BufRead>(input: R) -> Result<Vec<PlateAnnotation>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.splitn(6, ',').map(str::trim).collect();
        let bad = || Error::Format(format!("plate list line {}: {line:?}", n + 1));
        if f.len() < 5 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<u32>().map_err(|_| bad());
        let text = f.get(5).copied().unwrap_or("");
        let readable = !(text.is_empty() || text.eq_ignore_ascii_case("unreadable"));
        out.push(PlateAnnotation {
            image_id: f[0].to_string(),
            bbox: BBox::new(num(1)?, num(2)?, num(3)?, num(4)?),
            text: if readable { text.to_string() } else { String::new() },
            readable,
        });
    }
    Ok(out)
}

/// A recognizer output: where it read a plate and what it read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedPlate {
    pub bbox: BBox,
    pub text: String,
}

pub type Predictions = BTreeMap<String, Vec<PredictedPlate>>;

pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CraReport {
    /// Readable ground-truth plates.
    pub plates: usize,
    pub total_chars: usize,
    pub distance_sum: usize,
    pub cra: f64,
    /// Predictions that could not be attributed to any annotated image.
    pub warnings: Vec<String>,
}

impl CraReport {
    pub fn is_negative(&self) -> bool {
        self.cra < 0.0
    }
}

/// Character recognition accuracy over a set of annotated plates:
/// `100 * (1 - sum_k lev(truth_k, pred_k) / total truth characters)`.
///
/// Predictions are matched to annotations per image, greedily by box IoU
/// (at least [`MATCH_IOU`]). A readable plate without a match counts as a
/// full deletion. Unreadable plates are skipped. The value is not clamped.
pub fn cra(ground: &[PlateAnnotation], predicted: &Predictions) -> Result<CraReport> {
    let mut by_image: BTreeMap<&str, Vec<&PlateAnnotation>> = BTreeMap::new();
    for a in ground {
        if a.readable && a.text.is_empty() {
            return Err(Error::Validation(format!(
                "readable plate in {} has no text",
                a.image_id
            )));
        }
        by_image.entry(a.image_id.as_str()).or_default().push(a);
    }
    let warnings = predicted
        .keys()
        .filter(|id| !by_image.contains_key(id.as_str()))
        .map(|id| format!("predictions for unknown image {id:?} ignored"))
        .collect();

    let mut plates = 0;
    let mut total_chars = 0;
    let mut distance_sum = 0;
    for (id, truths) in &by_image {
        let preds = predicted.get(*id).map(Vec::as_slice).unwrap_or(&[]);
        let matched = greedy_match(truths, preds);
        for (t, m) in truths.iter().zip(matched) {
            if !t.readable {
                continue;
            }
            plates += 1;
            total_chars += t.text.chars().count();
            distance_sum += levenshtein(&t.text, m.map_or("", |p| preds[p].text.as_str()));
        }
    }
    if total_chars == 0 {
        return Err(Error::Argument("no readable plates to score".into()));
    }
    Ok(CraReport {
        plates,
        total_chars,
        distance_sum,
        cra: (1.0 - distance_sum as f64 / total_chars as f64) * 100.0,
        warnings,
    })
}

fn greedy_match(truths: &[&PlateAnnotation], preds: &[PredictedPlate]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = truths
        .iter()
        .enumerate()
        .flat_map(|(t, a)| preds.iter().enumerate().map(move |(p, b)| (a.bbox.iou(&b.bbox), t, p)))
        .filter(|(iou, _, _)| *iou >= MATCH_IOU)
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truths.len()];
    let mut used = vec![false; preds.len()];
    for (_, t, p) in pairs {
        if out[t].is_none() && !used[p] {
            out[t] = Some(p);
            used[p] = true;
        }
    }
    out
}

pub const METRICS_CSV_HEADER: &str = "config_id,file_size_bytes,miou,rmse,cra";

/// One evaluation point of a rate/accuracy experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config_id: String,
    pub file_size_bytes: u64,
    pub miou: f64,
    pub rmse: f64,
    pub cra: f64,
}

pub fn write_metric_rows<W: Write>(rows: &[MetricRow], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.4}",
            r.config_id, r.file_size_bytes, r.miou, r.rmse, r.cra
        )?;
    }
    Ok(())
}

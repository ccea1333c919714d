//! Channel scoring and the base/enhancement split.
//!
//! Every latent channel gets three numbers: how much it tells about the
//! segmentation and disparity tasks (plug-in mutual information, in bits)
//! and how much the input reconstruction degrades when it is zeroed
//! (`delta_mse`). They are folded into one Lagrangian
//!
//! ```text
//! L_i = delta_mse_i - beta * (mi_seg_i + mi_disp_i)
//! ```
//!
//! and the `base_size` channels with the smallest `L_i` form the base layer.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::mse;
use crate::tensor::{FeatureTensor, Image, TaskLabels, IGNORE_ID};

/// Label value excluded from mutual-information histograms.
pub const MI_IGNORE: u32 = u32::MAX;

pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_BASE_SIZE: usize = 179;
pub const DEFAULT_MI_BINS: usize = 32;
pub const DEFAULT_LABEL_BINS: usize = 32;

/// Inference tasks served from the shared latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Segmentation,
    Disparity,
    Reconstruction,
}

impl Task {
    /// Tasks whose information is treated as private. Fixed to input
    /// reconstruction.
    pub const PRIVATE: [Task; 1] = [Task::Reconstruction];

    pub fn is_private(self) -> bool {
        Self::PRIVATE.contains(&self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyFanConfig {
    pub beta: f64,
    pub base_size: usize,
    pub mi_bins: usize,
    pub label_bins: usize,
}

impl Default for PrivacyFanConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            base_size: DEFAULT_BASE_SIZE,
            mi_bins: DEFAULT_MI_BINS,
            label_bins: DEFAULT_LABEL_BINS,
        }
    }
}

impl PrivacyFanConfig {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Argument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.base_size == 0 || self.base_size > channels {
            return Err(Error::Argument(format!(
                "base size {} outside 1..={channels}",
                self.base_size
            )));
        }
        if self.mi_bins < 2 || self.label_bins < 2 {
            return Err(Error::Argument("histograms need at least 2 bins".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub channel: usize,
    pub mi_seg: f64,
    pub mi_disp: f64,
    pub delta_mse: f64,
    pub lagrangian: f64,
}

impl ChannelScore {
    pub fn new(channel: usize, mi_seg: f64, mi_disp: f64, delta_mse: f64, beta: f64) -> Self {
        Self {
            channel,
            mi_seg,
            mi_disp,
            delta_mse,
            lagrangian: lagrangian(delta_mse, mi_seg, mi_disp, beta),
        }
    }

    /// Recomputes the Lagrangian for a different `beta`.
    pub fn with_beta(self, beta: f64) -> Self {
        Self::new(self.channel, self.mi_seg, self.mi_disp, self.delta_mse, beta)
    }
}

/// `delta_mse - beta * (mi_seg + mi_disp)`.
pub fn lagrangian(delta_mse: f64, mi_seg: f64, mi_disp: f64, beta: f64) -> f64 {
    delta_mse - beta * (mi_seg + mi_disp)
}

/// Base and enhancement channel lists, each in ascending channel order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub base: Vec<usize>,
    pub enhancement: Vec<usize>,
}

impl Partition {
    pub fn channels(&self) -> usize {
        self.base.len() + self.enhancement.len()
    }

    /// Checks that the two lists are disjoint and cover `0..channels`.
    pub fn validate(&self, channels: usize) -> Result<()> {
        let mut seen = vec![false; channels];
        for &c in self.base.iter().chain(&self.enhancement) {
            let slot = seen
                .get_mut(c)
                .ok_or(Error::Validation(format!("channel {c} outside 0..{channels}")))?;
            if std::mem::replace(slot, true) {
                return Err(Error::Validation(format!("channel {c} listed twice")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("channel {missing} not assigned")));
        }
        Ok(())
    }
}

/// Sorts channels by `(lagrangian, channel)` and puts the first
/// `config.base_size` into the base layer.
pub fn partition(scores: &[ChannelScore], config: &PrivacyFanConfig) -> Result<Partition> {
    let n = scores.len();
    let mut seen = vec![false; n];
    for s in scores {
        let slot = seen.get_mut(s.channel).ok_or(Error::Validation(format!(
            "score for channel {} but only {n} scores",
            s.channel
        )))?;
        if std::mem::replace(slot, true) {
            return Err(Error::Validation(format!("duplicate score for channel {}", s.channel)));
        }
        if !s.lagrangian.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite Lagrangian for channel {}",
                s.channel
            )));
        }
    }
    config.validate(n)?;

    let mut order: Vec<&ChannelScore> = scores.iter().collect();
    order.sort_by(|a, b| a.lagrangian.total_cmp(&b.lagrangian).then(a.channel.cmp(&b.channel)));
    let mut base: Vec<usize> = order[..config.base_size].iter().map(|s| s.channel).collect();
    let mut enhancement: Vec<usize> = order[config.base_size..].iter().map(|s| s.channel).collect();
    base.sort_unstable();
    enhancement.sort_unstable();
    Ok(Partition { base, enhancement })
}

/// Plug-in mutual information, in bits, between a continuous feature and a
/// discrete label observed at the same locations.
///
/// The feature is histogrammed into `bins` equal-width bins over its
/// observed range. Samples whose label is [`MI_IGNORE`] are skipped.
pub fn estimate_mi(features: &[f32], labels: &[u32], bins: usize) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::Argument(format!(
            "feature/label length mismatch: {} vs {}",
            features.len(),
            labels.len()
        )));
    }
    if bins == 0 {
        return Err(Error::Argument("bins must be positive".into()));
    }
    let valid: Vec<(f32, u32)> = features
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y != MI_IGNORE)
        .map(|(&x, &y)| (x, y))
        .collect();
    if valid.len() < 2 {
        return Err(Error::Argument("need at least 2 labelled samples".into()));
    }
    let (lo, hi) = valid
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &(x, _)| {
            (lo.min(x), hi.max(x))
        });
    if lo == hi {
        return Ok(0.0);
    }

    let mut ids: Vec<u32> = valid.iter().map(|&(_, y)| y).collect();
    ids.sort_unstable();
    ids.dedup();
    let k = ids.len();

    let width = f64::from(hi) - f64::from(lo);
    let mut joint = vec![0u64; bins * k];
    for &(x, y) in &valid {
        let b = (((f64::from(x) - f64::from(lo)) / width * bins as f64) as usize).min(bins - 1);
        let l = ids.binary_search(&y).expect("label id collected above");
        joint[b * k + l] += 1;
    }

    let n = valid.len() as f64;
    let mut px = vec![0u64; bins];
    let mut py = vec![0u64; k];
    for b in 0..bins {
        for l in 0..k {
            px[b] += joint[b * k + l];
            py[l] += joint[b * k + l];
        }
    }
    let mut mi = 0.0;
    for b in 0..bins {
        for l in 0..k {
            let c = joint[b * k + l];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (px[b] as f64 * py[l] as f64)).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Integer downsampling factor between a label map and a feature plane.
pub fn alignment_factor(labels: &TaskLabels, feature_h: usize, feature_w: usize) -> Result<usize> {
    let (h, w) = (labels.height(), labels.width());
    if feature_h == 0 || h % feature_h != 0 || w % feature_w != 0 || h / feature_h != w / feature_w {
        return Err(Error::Argument(format!(
            "labels {h}x{w} do not align with features {feature_h}x{feature_w}"
        )));
    }
    Ok(h / feature_h)
}

/// Nearest-neighbour downsampling of a segmentation map: each feature
/// location takes the label at the centre of its block.
pub fn align_segmentation(labels: &TaskLabels, factor: usize) -> Vec<u32> {
    let (h, w) = (labels.height() / factor, labels.width() / factor);
    let seg = labels.segmentation();
    let c = factor / 2;
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| {
            let id = seg[(y * factor + c) * labels.width() + x * factor + c];
            if id == IGNORE_ID {
                MI_IGNORE
            } else {
                u32::from(id)
            }
        })
        .collect()
}

/// Block-mean downsampling of a disparity map.
pub fn align_disparity(labels: &TaskLabels, factor: usize) -> Vec<f32> {
    let (h, w) = (labels.height() / factor, labels.width() / factor);
    let disp = labels.disparity();
    let norm = (factor * factor) as f64;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for dy in 0..factor {
                let row = (y * factor + dy) * labels.width() + x * factor;
                acc += disp[row..row + factor].iter().map(|&d| f64::from(d)).sum::<f64>();
            }
            out.push((acc / norm) as f32);
        }
    }
    out
}

/// Assigns each value to one of `bins` quantile bins. Equal values always
/// share a bin, so heavily tied data occupies fewer bins.
pub fn quantile_bins(values: &[f32], bins: usize) -> Vec<u32> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f32> = (1..bins).map(|k| sorted[(k * n / bins).min(n - 1)]).collect();
    values.iter().map(|v| cuts.partition_point(|c| c <= v) as u32).collect()
}

/// Mean, over the calibration set, of the reconstruction MSE caused by
/// zeroing `channel`.
pub fn delta_mse<F>(reconstruct: F, calibration: &[FeatureTensor], channel: usize) -> Result<f64>
where
    F: Fn(&FeatureTensor) -> Result<Image>,
{
    if calibration.is_empty() {
        return Err(Error::Argument("calibration set is empty".into()));
    }
    let mut per_item = calibration
        .iter()
        .map(|t| {
            let full = reconstruct(t)?;
            let ablated = reconstruct(&t.zero_channel(channel)?)?;
            impact(&full, &ablated)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(order_free_mean(&mut per_item))
}

/// [`delta_mse`] for every channel at once, reusing the unablated
/// reconstructions. Channels are scored in parallel.
pub fn delta_mse_all<F>(reconstruct: F, calibration: &[FeatureTensor]) -> Result<Vec<f64>>
where
    F: Fn(&FeatureTensor) -> Result<Image> + Sync,
{
    let first = calibration
        .first()
        .ok_or_else(|| Error::Argument("calibration set is empty".into()))?;
    let channels = first.channels();
    if calibration.iter().any(|t| t.channels() != channels) {
        return Err(Error::Argument("calibration tensors differ in channel count".into()));
    }
    let full: Vec<Image> = calibration.par_iter().map(&reconstruct).collect::<Result<_>>()?;
    (0..channels)
        .into_par_iter()
        .map(|c| {
            let mut per_item = calibration
                .iter()
                .zip(&full)
                .map(|(t, f)| impact(f, &reconstruct(&t.zero_channel(c)?)?))
                .collect::<Result<Vec<f64>>>()?;
            Ok(order_free_mean(&mut per_item))
        })
        .collect()
}

fn impact(full: &Image, ablated: &Image) -> Result<f64> {
    if !full.same_shape(ablated) {
        return Err(Error::Contract(format!(
            "reconstructor returned {}x{}x{} then {}x{}x{}",
            full.height(),
            full.width(),
            full.planes(),
            ablated.height(),
            ablated.width(),
            ablated.planes()
        )));
    }
    mse(full.data(), ablated.data())
}

/// Mean that does not depend on the order of its inputs.
fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// One calibration sample: features with the task labels of its input.
pub struct ScoringSample<'a> {
    pub tensor: &'a FeatureTensor,
    pub labels: &'a TaskLabels,
}

/// Full score table: MI against both non-private tasks and the
/// reconstruction impact of every channel.
pub fn score_channels<F>(
    samples: &[ScoringSample<'_>],
    reconstruct: F,
    config: &PrivacyFanConfig,
) -> Result<Vec<ChannelScore>>
where
    F: Fn(&FeatureTensor) -> Result<Image> + Sync,
{
    let first = samples
        .first()
        .ok_or_else(|| Error::Argument("no scoring samples".into()))?;
    let (fh, fw, channels) = (first.tensor.height(), first.tensor.width(), first.tensor.channels());
    config.validate(channels)?;

    let mut seg = Vec::new();
    let mut disp = Vec::new();
    for s in samples {
        let t = s.tensor;
        if (t.height(), t.width(), t.channels()) != (fh, fw, channels) {
            return Err(Error::Argument("scoring tensors differ in shape".into()));
        }
        let factor = alignment_factor(s.labels, fh, fw)?;
        seg.extend(align_segmentation(s.labels, factor));
        disp.extend(align_disparity(s.labels, factor));
    }
    let disp = quantile_bins(&disp, config.label_bins);

    let tensors: Vec<FeatureTensor> = samples.iter().map(|s| s.tensor.clone()).collect();
    let impacts = delta_mse_all(&reconstruct, &tensors)?;

    (0..channels)
        .into_par_iter()
        .map(|c| {
            let values: Vec<f32> = samples
                .iter()
                .flat_map(|s| s.tensor.channel(c).iter().copied())
                .collect();
            let mi_seg = estimate_mi(&values, &seg, config.mi_bins)?;
            let mi_disp = estimate_mi(&values, &disp, config.mi_bins)?;
            Ok(ChannelScore::new(c, mi_seg, mi_disp, impacts[c], config.beta))
        })
        .collect()
}

pub const SCORE_CSV_HEADER: &str = "channel,mi_seg,mi_disp,delta_mse,lagrangian";

/// Writes the score table with six significant digits per value.
pub fn write_scores_csv<W: Write>(scores: &[ChannelScore], mut out: W) -> Result<()> {
    writeln!(out, "{SCORE_CSV_HEADER}")?;
    for s in scores {
        writeln!(
            out,
            "{},{:.5e},{:.5e},{:.5e},{:.5e}",
            s.channel, s.mi_seg, s.mi_disp, s.delta_mse, s.lagrangian
        )?;
    }
    Ok(())
}

pub fn read_scores_csv<R: BufRead>(input: R) -> Result<Vec<ChannelScore>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty score table".into()))??;
    if header.trim() != SCORE_CSV_HEADER {
        return Err(Error::Format(format!("unexpected score header {header:?}")));
    }
    let mut scores = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Format(format!("score row {}: {line:?}", row + 2));
        if fields.len() != 5 {
            return Err(bad());
        }
        let num = |i: usize| fields[i].parse::<f64>().map_err(|_| bad());
        let score = ChannelScore {
            channel: fields[0].parse().map_err(|_| bad())?,
            mi_seg: num(1)?,
            mi_disp: num(2)?,
            delta_mse: num(3)?,
            lagrangian: num(4)?,
        };
        if score.mi_seg < 0.0 || score.mi_disp < 0.0 || score.delta_mse < 0.0 {
            return Err(Error::Validation(format!(
                "negative score component for channel {}",
                score.channel
            )));
        }
        scores.push(score);
    }
    Ok(scores)
}

//! End-to-end evaluation of the harness: score, partition, code, decode and
//! measure the three tasks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::heads::{disp_head, seg_head};
use super::recognizer::recognize_glyphs;
use super::scene::Scene;
use super::HarnessModel;
use crate::codec::{decode_layers, encode_layers, CodecParams, ExternalCodec, LayeredBitstream};
use crate::error::{Error, Result};
use crate::metrics::{cra, miou, rmse, BBox, PlateAnnotation, PredictedPlate, Predictions};
use crate::scoring::{partition, score_channels, ChannelScore, Partition, PrivacyFanConfig, ScoringSample};
use crate::tensor::{FeatureTensor, IGNORE_ID};

/// Task accuracy of a set of decoded tensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub miou: f64,
    pub rmse: f64,
    pub cra: f64,
}

/// Scenes with their encoded features.
pub struct HarnessCorpus {
    pub scenes: Vec<Scene>,
    pub tensors: Vec<FeatureTensor>,
}

impl HarnessCorpus {
    pub fn new(scenes: Vec<Scene>) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Argument("empty harness corpus".into()));
        }
        let tensors = scenes
            .par_iter()
            .map(|s| HarnessModel.encode(&s.image))
            .collect::<Result<_>>()?;
        Ok(Self { scenes, tensors })
    }

    /// Pairs scenes with features computed elsewhere.
    pub fn with_tensors(scenes: Vec<Scene>, tensors: Vec<FeatureTensor>) -> Result<Self> {
        if scenes.is_empty() || scenes.len() != tensors.len() {
            return Err(Error::Argument(format!(
                "{} tensors for {} scenes",
                tensors.len(),
                scenes.len()
            )));
        }
        Ok(Self { scenes, tensors })
    }

    pub fn annotations(&self) -> Vec<PlateAnnotation> {
        self.scenes.iter().flat_map(|s| s.plates.iter().cloned()).collect()
    }

    pub fn score(&self, config: &PrivacyFanConfig) -> Result<Vec<ChannelScore>> {
        let samples: Vec<ScoringSample<'_>> = self
            .scenes
            .iter()
            .zip(&self.tensors)
            .map(|(s, t)| ScoringSample {
                tensor: t,
                labels: &s.labels,
            })
            .collect();
        score_channels(&samples, |t| HarnessModel.decode(t), config)
    }

    pub fn partition(&self, config: &PrivacyFanConfig) -> Result<(Vec<ChannelScore>, Partition)> {
        let scores = self.score(config)?;
        let p = partition(&scores, config)?;
        Ok((scores, p))
    }

    /// Evaluates the tasks on `decoded`, one tensor per scene.
    pub fn evaluate(&self, decoded: &[FeatureTensor]) -> Result<TaskScores> {
        if decoded.len() != self.scenes.len() {
            return Err(Error::Argument(format!(
                "{} decoded tensors for {} scenes",
                decoded.len(),
                self.scenes.len()
            )));
        }
        let per_scene = self
            .scenes
            .par_iter()
            .zip(decoded)
            .map(|(s, t)| {
                let seg = seg_head(t, s.labels.num_classes())?;
                let disp = disp_head(t)?;
                let img = HarnessModel.decode(t)?;
                let boxes: Vec<BBox> = s.plates.iter().map(|p| p.bbox).collect();
                let plates = boxes
                    .iter()
                    .zip(recognize_glyphs(&img, &boxes))
                    .map(|(&bbox, text)| PredictedPlate { bbox, text })
                    .collect::<Vec<_>>();
                Ok((seg, disp, plates))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut seg_pred = Vec::new();
        let mut seg_gt = Vec::new();
        let mut disp_pred = Vec::new();
        let mut disp_gt = Vec::new();
        let mut predictions = Predictions::new();
        for (s, (seg, disp, plates)) in self.scenes.iter().zip(per_scene) {
            seg_pred.extend(seg);
            seg_gt.extend_from_slice(s.labels.segmentation());
            disp_pred.extend(disp);
            disp_gt.extend_from_slice(s.labels.disparity());
            predictions.insert(s.id.clone(), plates);
        }
        let classes = usize::from(self.scenes[0].labels.num_classes());
        Ok(TaskScores {
            miou: miou(&seg_pred, &seg_gt, classes, IGNORE_ID)?,
            rmse: rmse(&disp_pred, &disp_gt)?,
            cra: cra(&self.annotations(), &predictions)?.cra,
        })
    }

    /// Codes every tensor, returning the streams and their decoded tensors.
    pub fn code(
        &self,
        partition: &Partition,
        base: &CodecParams,
        enhancement: &CodecParams,
        external: Option<&ExternalCodec>,
    ) -> Result<(Vec<LayeredBitstream>, Vec<FeatureTensor>)> {
        self.tensors
            .par_iter()
            .map(|t| {
                let bs = encode_layers(t, partition, base, enhancement, external)?;
                let back = decode_layers(&bs, external)?;
                Ok((bs, back))
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().unzip())
    }
}

//! Run configuration: defaults, an optional `key = value` file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{CodecId, CodecParams, MAX_QP};
use crate::error::{Error, Result};
use crate::scoring::{PrivacyFanConfig, DEFAULT_BASE_SIZE, DEFAULT_BETA, DEFAULT_LABEL_BINS, DEFAULT_MI_BINS};

pub const DEFAULT_BASE_QP: u8 = 20;
pub const DEFAULT_ENHANCEMENT_QPS: [u8; 4] = [40, 30, 20, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub beta: f64,
    /// Base-set size; when unset the corpus recommendation, then 179, applies.
    pub base_size: Option<usize>,
    pub base_qp: u8,
    pub enhancement_qps: Vec<u8>,
    pub codec: CodecId,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub mi_bins: usize,
    pub label_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            beta: DEFAULT_BETA,
            base_size: None,
            base_qp: DEFAULT_BASE_QP,
            enhancement_qps: DEFAULT_ENHANCEMENT_QPS.to_vec(),
            codec: CodecId::InternalDct,
            out: None,
            seed: 0,
            mi_bins: DEFAULT_MI_BINS,
            label_bins: DEFAULT_LABEL_BINS,
        }
    }
}

fn parse_qp(v: &str) -> Result<u8> {
    let qp: u8 = v.trim().parse().map_err(|_| Error::Argument(format!("bad qp {v:?}")))?;
    if qp > MAX_QP {
        return Err(Error::Argument(format!("qp {qp} outside [0, {MAX_QP}]")));
    }
    Ok(qp)
}

pub fn parse_codec(v: &str) -> Result<CodecId> {
    match v.trim() {
        "internal" | "internal_dct" => Ok(CodecId::InternalDct),
        "external" => Ok(CodecId::External),
        other => Err(Error::Argument(format!("unknown codec {other:?}"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("config line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies one setting by name. Names use `snake_case`; dashes are accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Argument(format!("bad {what} {value:?}"));
        match key.replace('-', "_").as_str() {
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "beta" => self.beta = value.parse().map_err(|_| bad("beta"))?,
            "base_size" => self.base_size = Some(value.parse().map_err(|_| bad("base size"))?),
            "base_qp" => self.base_qp = parse_qp(value)?,
            "enhancement_qp" | "enhancement_qps" | "enh_qp" => {
                self.enhancement_qps = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(parse_qp)
                    .collect::<Result<_>>()?
            }
            "codec" => self.codec = parse_codec(value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "mi_bins" => self.mi_bins = value.parse().map_err(|_| bad("bin count"))?,
            "label_bins" => self.label_bins = value.parse().map_err(|_| bad("bin count"))?,
            other => return Err(Error::Argument(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Defaults, then the file at `path` (if any), then `overrides`.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            cfg.apply(&parse_config_text(&text)?)?;
        }
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.enhancement_qps.is_empty() {
            return Err(Error::Argument("enhancement qp list is empty".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Argument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.base_size == Some(0) {
            return Err(Error::Argument("base size must be positive".into()));
        }
        Ok(())
    }

    pub fn fan(&self, recommended_base: Option<usize>) -> PrivacyFanConfig {
        PrivacyFanConfig {
            beta: self.beta,
            base_size: self.base_size.or(recommended_base).unwrap_or(DEFAULT_BASE_SIZE),
            mi_bins: self.mi_bins,
            label_bins: self.label_bins,
        }
    }

    pub fn base_params(&self) -> CodecParams {
        CodecParams {
            qp: self.base_qp,
            codec: self.codec,
        }
    }

    pub fn enhancement_params(&self, qp: u8) -> CodecParams {
        CodecParams { qp, codec: self.codec }
    }

    pub fn corpus(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::Argument("no corpus given".into()))
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Argument("no output location given".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = parse_config_text("# sweep\nbeta = 4\nenhancement_qp = 40, 10\nbase_qp=22 # hi\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply(&file).unwrap();
        cfg.apply(&[("base-qp".into(), "18".into())]).unwrap();
        assert_eq!(cfg.beta, 4.0);
        assert_eq!(cfg.enhancement_qps, vec![40, 10]);
        assert_eq!(cfg.base_qp, 18);
        assert_eq!(cfg.fan(Some(1)).base_size, 1);
        assert_eq!(cfg.fan(None).base_size, 179);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("qp_max", "3").is_err());
        assert!(cfg.set("base_qp", "52").is_err());
        assert!(cfg.set("codec", "hevc").is_err());
        assert!(parse_config_text("beta 3").is_err());
        cfg.enhancement_qps.clear();
        assert!(cfg.validate().is_err());
    }
}

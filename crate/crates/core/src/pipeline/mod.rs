//! Experiment orchestration behind the `pfan` command line: scoring,
//! partitioning, layered coding, evaluation and rate sweeps.

pub mod config;
pub mod corpus;
pub mod report;

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

pub use config::RunConfig;
pub use corpus::{load_corpus, read_index, write_corpus, CorpusIndex};
pub use report::{Manifest, SweepRow};

use crate::blur::{blur_sweep, write_blur_csv, BlurRow, BlurSample};
use crate::codec::{decode_layers, CodecId, ExternalCodec, LayeredBitstream};
use crate::error::{Error, Result};
use crate::harness::{recognize_glyphs, SceneSpec};
use crate::metrics::{MetricRow, METRICS_CSV_HEADER};
use crate::scoring::{partition, read_scores_csv, write_scores_csv, ChannelScore, Partition};
use crate::tensor::{load_tensor, save_tensor, FeatureTensor};
use crate::transport::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Manifest path for a single-file output: `<file>.manifest.json`.
pub fn manifest_for(file: &Path) -> PathBuf {
    let mut name = file.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file_manifest(
    command: &str,
    params: serde_json::Value,
    inputs: &[PathBuf],
    output: &Path,
) -> Result<Manifest> {
    let mut m = Manifest::new(command, params);
    m.add_inputs(inputs, None)?;
    m.add_outputs(&[output.to_path_buf()], None)?;
    m.write(&manifest_for(output))?;
    Ok(m)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

/// External codec from the environment when `codec` asks for it. Asking for
/// it without the environment set is an error.
pub fn external_for(codec: CodecId) -> Result<Option<ExternalCodec>> {
    match codec {
        CodecId::InternalDct => Ok(None),
        CodecId::External => match ExternalCodec::from_env()? {
            Some(c) => Ok(Some(c)),
            None => Err(Error::Environment {
                message: format!(
                    "external codec requested but {} / {} are not set",
                    crate::codec::external::ENCODE_ENV,
                    crate::codec::external::DECODE_ENV
                ),
                command: "<unset>".into(),
            }),
        },
    }
}

pub fn cmd_synth(out: &Path, spec: &SceneSpec, first_seed: u64, count: usize) -> Result<CorpusIndex> {
    let index = write_corpus(out, spec, first_seed, count)?;
    let mut m = Manifest::new(
        "synth",
        json!({ "spec": spec.with_seed(first_seed), "first_seed": first_seed, "count": count }),
    );
    m.add_outputs(&corpus::corpus_files(out, &index), Some(out))?;
    m.write(&out.join(MANIFEST_FILE))?;
    Ok(index)
}

/// Scores every channel of the corpus and writes the table to `out`.
pub fn cmd_score(cfg: &RunConfig, out: &Path) -> Result<Vec<ChannelScore>> {
    let dir = cfg.corpus()?;
    let (index, corpus) = load_corpus(dir)?;
    let mut fan = cfg.fan(Some(index.recommended_base_size));
    fan.base_size = fan.base_size.min(corpus.tensors[0].channels());
    let scores = corpus.score(&fan)?;
    create_parent(out)?;
    let mut buf = Vec::new();
    write_scores_csv(&scores, &mut buf)?;
    write_atomic(out, &buf)?;
    write_file_manifest(
        "score",
        json!({ "beta": fan.beta, "mi_bins": fan.mi_bins, "label_bins": fan.label_bins }),
        &corpus::corpus_files(dir, &index),
        out,
    )?;
    Ok(scores)
}

pub fn read_scores(path: &Path) -> Result<Vec<ChannelScore>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores_csv(BufReader::new(f))
}

/// Partition from a score table; the Lagrangian is recomputed with the
/// configured beta.
pub fn partition_from_scores(scores_csv: &Path, cfg: &RunConfig) -> Result<Partition> {
    let scores: Vec<ChannelScore> = read_scores(scores_csv)?
        .into_iter()
        .map(|s| s.with_beta(cfg.beta))
        .collect();
    partition(&scores, &cfg.fan(None))
}

pub fn cmd_partition(scores_csv: &Path, cfg: &RunConfig, out: &Path) -> Result<Partition> {
    let p = partition_from_scores(scores_csv, cfg)?;
    create_parent(out)?;
    write_atomic(out, (serde_json::to_string_pretty(&p)? + "\n").as_bytes())?;
    write_file_manifest(
        "partition",
        json!({ "beta": cfg.beta, "base_size": cfg.fan(None).base_size }),
        &[scores_csv.to_path_buf()],
        out,
    )?;
    Ok(p)
}

pub fn load_partition(path: &Path) -> Result<Partition> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Where the channel split comes from.
#[derive(Debug, Clone)]
pub enum PartitionSource {
    Scores(PathBuf),
    File(PathBuf),
}

impl PartitionSource {
    pub fn path(&self) -> &Path {
        match self {
            PartitionSource::Scores(p) | PartitionSource::File(p) => p,
        }
    }

    pub fn resolve(&self, cfg: &RunConfig) -> Result<Partition> {
        match self {
            PartitionSource::Scores(p) => partition_from_scores(p, cfg),
            PartitionSource::File(p) => load_partition(p),
        }
    }
}

pub fn cmd_encode(
    tensor: &Path,
    split: &PartitionSource,
    cfg: &RunConfig,
    enhancement_qp: u8,
    out: &Path,
) -> Result<LayeredBitstream> {
    if !split.path().exists() {
        return Err(Error::Argument(format!(
            "score table or partition {} not found",
            split.path().display()
        )));
    }
    let t = load_tensor(tensor)?;
    let p = split.resolve(cfg)?;
    let external = external_for(cfg.codec)?;
    let bs = crate::codec::encode_layers(
        &t,
        &p,
        &cfg.base_params(),
        &cfg.enhancement_params(enhancement_qp),
        external.as_ref(),
    )?;
    create_parent(out)?;
    write_atomic(out, &bs.to_bytes()?)?;
    write_file_manifest(
        "encode",
        json!({ "base_qp": cfg.base_qp, "enhancement_qp": enhancement_qp, "codec": cfg.codec, "beta": cfg.beta }),
        &[tensor.to_path_buf(), split.path().to_path_buf()],
        out,
    )?;
    Ok(bs)
}

pub fn read_stream(path: &Path) -> Result<LayeredBitstream> {
    LayeredBitstream::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn cmd_decode(stream: &Path, out: &Path) -> Result<FeatureTensor> {
    let bs = read_stream(stream)?;
    let external = if bs.base.codec.codec == CodecId::External || bs.enhancement.codec.codec == CodecId::External {
        external_for(CodecId::External)?
    } else {
        None
    };
    let t = decode_layers(&bs, external.as_ref())?;
    create_parent(out)?;
    save_tensor(&t, out)?;
    write_file_manifest("decode", json!({}), &[stream.to_path_buf()], out)?;
    Ok(t)
}

fn append_with_header(path: &Path, header: &str, body: &str) -> Result<()> {
    let fresh = !path.exists();
    if !fresh {
        let first = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if first.lines().next() != Some(header) {
            return Err(Error::Format(format!("{} has a different header", path.display())));
        }
    }
    create_parent(path)?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Decodes `<id>.pfan` for every corpus scene from `streams` and scores the
/// three tasks, appending one row to `out`.
pub fn cmd_metrics(corpus_dir: &Path, streams: &Path, config_id: &str, out: &Path) -> Result<MetricRow> {
    let (_, corpus) = load_corpus(corpus_dir)?;
    let external = ExternalCodec::from_env()?;
    let decoded = corpus
        .scenes
        .par_iter()
        .map(|s| {
            let path = streams.join(format!("{}.pfan", s.id));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let t = decode_layers(&LayeredBitstream::from_bytes(&bytes)?, external.as_ref())?;
            Ok((bytes.len() as u64, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: u64 = decoded.iter().map(|(n, _)| n).sum();
    let tensors: Vec<FeatureTensor> = decoded.into_iter().map(|(_, t)| t).collect();
    let scores = corpus.evaluate(&tensors)?;
    let row = MetricRow {
        config_id: config_id.to_string(),
        file_size_bytes: total,
        miou: scores.miou,
        rmse: scores.rmse,
        cra: scores.cra,
    };
    let mut buf = Vec::new();
    crate::metrics::write_metric_rows(std::slice::from_ref(&row), &mut buf)?;
    let body = String::from_utf8_lossy(&buf);
    let body = body.split_once('\n').map_or("", |(_, rest)| rest);
    append_with_header(out, METRICS_CSV_HEADER, body)?;
    Ok(row)
}

pub fn cmd_blur_sweep(corpus_dir: &Path, sigmas: &[f64], out: &Path) -> Result<Vec<BlurRow>> {
    let (index, corpus) = load_corpus(corpus_dir)?;
    let samples: Vec<BlurSample<'_>> = corpus
        .scenes
        .iter()
        .map(|s| BlurSample {
            image_id: &s.id,
            image: &s.image,
            plates: &s.plates,
        })
        .collect();
    let rows = blur_sweep(&samples, sigmas, |img, boxes| Ok(recognize_glyphs(img, boxes)))?;
    let mut buf = Vec::new();
    write_blur_csv(&rows, &mut buf)?;
    create_parent(out)?;
    write_atomic(out, &buf)?;
    write_file_manifest(
        "blur-sweep",
        json!({ "sigmas": sigmas }),
        &corpus::corpus_files(corpus_dir, &index),
        out,
    )?;
    Ok(rows)
}

/// Result of [`cmd_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub run_id: String,
    pub partition: Partition,
    pub scores: Vec<ChannelScore>,
    /// Rows of this run, sorted by total size.
    pub rows: Vec<SweepRow>,
}

/// Scores the corpus, then codes it once per enhancement QP. Each point
/// writes its streams under `<out>/qp_NN/`; rows are appended to
/// `<out>/sweep.csv` and plotted to `<out>/sweep.svg`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let dir = cfg.corpus()?;
    let out = cfg.out()?;
    let (index, corpus) = load_corpus(dir)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let fan = cfg.fan(Some(index.recommended_base_size));
    let (scores, split) = corpus.partition(&fan)?;
    let mut buf = Vec::new();
    write_scores_csv(&scores, &mut buf)?;
    write_atomic(&out.join("scores.csv"), &buf)?;
    write_atomic(
        &out.join("partition.json"),
        (serde_json::to_string_pretty(&split)? + "\n").as_bytes(),
    )?;

    // the output location does not affect results, so it stays out of the run id
    let mut params = serde_json::to_value(cfg)?;
    if let Some(map) = params.as_object_mut() {
        map.remove("out");
    }
    let mut manifest = Manifest::new("sweep", params);
    manifest.parameters["resolved_base_size"] = json!(fan.base_size);
    manifest.add_inputs(&corpus::corpus_files(dir, &index), Some(dir))?;
    let run_id = manifest.run_id();
    let external = external_for(cfg.codec)?;
    let base = cfg.base_params();

    let mut rows: Vec<SweepRow> = cfg
        .enhancement_qps
        .par_iter()
        .map(|&qp| {
            let point = || -> Result<(u64, crate::harness::TaskScores)> {
                let (streams, decoded) = corpus.code(&split, &base, &cfg.enhancement_params(qp), external.as_ref())?;
                let sub = out.join(format!("qp_{qp:02}"));
                fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                let mut total = 0u64;
                for (s, bs) in corpus.scenes.iter().zip(&streams) {
                    let bytes = bs.to_bytes()?;
                    total += bytes.len() as u64;
                    write_atomic(&sub.join(format!("{}.pfan", s.id)), &bytes)?;
                }
                Ok((total, corpus.evaluate(&decoded)?))
            };
            match point() {
                Ok((total, s)) => SweepRow {
                    run_id: run_id.clone(),
                    base_qp: cfg.base_qp,
                    enhancement_qp: qp,
                    total_bytes: Some(total),
                    miou: Some(s.miou),
                    rmse: Some(s.rmse),
                    cra: Some(s.cra),
                    status: "ok".into(),
                },
                Err(e) => SweepRow {
                    run_id: run_id.clone(),
                    base_qp: cfg.base_qp,
                    enhancement_qp: qp,
                    total_bytes: None,
                    miou: None,
                    rmse: None,
                    cra: None,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect();
    report::sort_rows(&mut rows);

    let csv = out.join("sweep.csv");
    report::append_sweep_csv(&csv, &rows)?;
    let svg = out.join("sweep.svg");
    write_atomic(&svg, report::render_svg(&rows).as_bytes())?;

    let mut produced = vec![out.join("scores.csv"), out.join("partition.json"), svg];
    for r in rows.iter().filter(|r| r.is_ok()) {
        let sub = out.join(format!("qp_{:02}", r.enhancement_qp));
        produced.extend(corpus.scenes.iter().map(|s| sub.join(format!("{}.pfan", s.id))));
    }
    manifest.add_outputs(&produced, Some(out))?;
    manifest.write(&out.join(MANIFEST_FILE))?;

    Ok(SweepOutcome {
        run_id,
        partition: split,
        scores,
        rows,
    })
}

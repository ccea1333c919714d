use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pfan::harness::SceneSpec;
use pfan::pipeline::{self, PartitionSource, RunConfig};
use pfan::tensor::{import_npy, save_tensor};
use pfan::{transport, Error, ErrorKind};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ENVIRONMENT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pfan",
    version,
    about = "Layered feature compression with privacy-aware channel splits"
)]
struct Cli {
    /// `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the commands that need a run configuration.
#[derive(Args, Default)]
struct Settings {
    #[arg(long)]
    beta: Option<f64>,
    /// Number of channels in the base layer.
    #[arg(long)]
    base_size: Option<usize>,
    #[arg(long)]
    base_qp: Option<u8>,
    /// Comma-separated enhancement QPs.
    #[arg(long)]
    enhancement_qp: Option<String>,
    /// `internal` or `external`.
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    mi_bins: Option<usize>,
    #[arg(long)]
    label_bins: Option<usize>,
}

impl Settings {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k.to_string(), val));
            }
        };
        push("beta", self.beta.map(|x| x.to_string()));
        push("base_size", self.base_size.map(|x| x.to_string()));
        push("base_qp", self.base_qp.map(|x| x.to_string()));
        push("enhancement_qp", self.enhancement_qp.clone());
        push("codec", self.codec.clone());
        push("mi_bins", self.mi_bins.map(|x| x.to_string()));
        push("label_bins", self.label_bins.map(|x| x.to_string()));
        v
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        plates: Option<usize>,
        #[arg(long)]
        ink: Option<f32>,
        #[arg(long)]
        noise: Option<f32>,
        #[arg(long)]
        texture: Option<f32>,
    },
    /// Score every channel of a corpus and write the score table.
    Score {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Split channels into base and enhancement sets from a score table.
    Partition {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Encode a tensor (.pft or .npy) into a layered stream.
    Encode {
        #[arg(long)]
        tensor: PathBuf,
        /// Score table to derive the split from.
        #[arg(long, conflicts_with = "partition", required_unless_present = "partition")]
        scores: Option<PathBuf>,
        /// Precomputed partition JSON.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Decode a layered stream back into a tensor.
    Decode {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the decoded streams of a corpus and append a metrics row.
    Metrics {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory holding `<scene>.pfan` files.
        #[arg(long)]
        streams: PathBuf,
        #[arg(long)]
        config_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blur the corpus images and measure MSE and plate readability.
    BlurSweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
        sigma: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score, partition, code and evaluate a corpus at every enhancement QP.
    Sweep {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Receive layered streams over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many streams.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Send layered streams to a server over one connection.
    Send {
        #[arg(long)]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn run_config(
    config: Option<&Path>,
    settings: &Settings,
    extra: &[(&str, Option<&PathBuf>)],
) -> pfan::Result<RunConfig> {
    let mut pairs = settings.pairs();
    for (k, v) in extra {
        if let Some(v) = v {
            pairs.push((k.to_string(), v.display().to_string()));
        }
    }
    RunConfig::resolve(config, &pairs)
}

fn run(cli: Cli) -> pfan::Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth {
            out,
            count,
            seed,
            plates,
            ink,
            noise,
            texture,
        } => {
            let d = SceneSpec::default();
            let spec = SceneSpec {
                plates: plates.unwrap_or(d.plates),
                ink: ink.unwrap_or(d.ink),
                noise: noise.unwrap_or(d.noise),
                texture: texture.unwrap_or(d.texture),
                ..d
            };
            let index = pipeline::cmd_synth(&out, &spec, seed, count)?;
            println!("wrote {} scenes to {}", index.scenes.len(), out.display());
        }
        Command::Score { corpus, out, settings } => {
            let cfg = run_config(config, &settings, &[("corpus", corpus.as_ref())])?;
            let scores = pipeline::cmd_score(&cfg, &out)?;
            println!("scored {} channels -> {}", scores.len(), out.display());
        }
        Command::Partition { scores, out, settings } => {
            let cfg = run_config(config, &settings, &[])?;
            let p = pipeline::cmd_partition(&scores, &cfg, &out)?;
            println!("base {:?}\nenhancement {:?}", p.base, p.enhancement);
        }
        Command::Encode {
            tensor,
            scores,
            partition,
            out,
            settings,
        } => {
            let cfg = run_config(config, &settings, &[])?;
            let split = match (scores, partition) {
                (Some(s), _) => PartitionSource::Scores(s),
                (None, Some(p)) => PartitionSource::File(p),
                (None, None) => return Err(Error::Argument("a score table or partition is required".into())),
            };
            if !split.path().exists() {
                return Err(Error::Argument(format!("{} not found", split.path().display())));
            }
            let qp = match cfg.enhancement_qps.as_slice() {
                [qp] => *qp,
                _ => return Err(Error::Argument("encode takes exactly one enhancement qp".into())),
            };
            let tensor = if tensor.extension().is_some_and(|e| e == "npy") {
                let converted = out.with_extension("pft");
                save_tensor(&import_npy(&tensor)?, &converted)?;
                converted
            } else {
                tensor
            };
            let bs = pipeline::cmd_encode(&tensor, &split, &cfg, qp, &out)?;
            let r = bs.size_report();
            println!(
                "{}: {} bytes (base {}, enhancement {})",
                out.display(),
                r.total_bytes,
                r.base_bytes,
                r.enhancement_bytes
            );
        }
        Command::Decode { stream, out } => {
            let t = pipeline::cmd_decode(&stream, &out)?;
            println!("{}: {}x{}x{}", out.display(), t.height(), t.width(), t.channels());
        }
        Command::Metrics {
            corpus,
            streams,
            config_id,
            out,
        } => {
            let r = pipeline::cmd_metrics(&corpus, &streams, &config_id, &out)?;
            println!(
                "{}: {} bytes, miou {:.4}, rmse {:.4}, cra {:.2}",
                r.config_id, r.file_size_bytes, r.miou, r.rmse, r.cra
            );
        }
        Command::BlurSweep { corpus, sigma, out } => {
            for r in pipeline::cmd_blur_sweep(&corpus, &sigma, &out)? {
                println!("sigma {}: mse {:.6}, cra {:.2}", r.sigma, r.mse, r.cra);
            }
        }
        Command::Sweep { corpus, out, settings } => {
            let cfg = run_config(config, &settings, &[("corpus", corpus.as_ref()), ("out", out.as_ref())])?;
            let outcome = pipeline::cmd_sweep(&cfg)?;
            println!("run {}", outcome.run_id);
            for r in &outcome.rows {
                match (r.total_bytes, r.miou, r.rmse, r.cra) {
                    (Some(b), Some(m), Some(d), Some(c)) => println!(
                        "qp {:>2}: {b} bytes, miou {m:.4}, rmse {d:.4}, cra {c:.2}",
                        r.enhancement_qp
                    ),
                    _ => println!("qp {:>2}: {}", r.enhancement_qp, r.status),
                }
            }
        }
        Command::Serve { host, port, out, count } => {
            let listener = TcpListener::bind((host.as_str(), port))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let files = transport::serve(&listener, &out, count, |e| eprintln!("pfan: {e}"))?;
            println!("received {} streams", files.len());
        }
        Command::Send { host, port, files } => {
            let n = transport::send((host.as_str(), port), &files)?;
            println!("sent {} streams, {n} bytes", files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfan: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Data | ErrorKind::Io => EXIT_DATA,
                ErrorKind::Environment => EXIT_ENVIRONMENT,
            })
        }
    }
}

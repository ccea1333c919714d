//! Sweep tables, plots and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SWEEP_SCHEMA: &str = "# pfan-sweep v1";
pub const SWEEP_HEADER: &str = "run_id,base_qp,enhancement_qp,total_bytes,miou,rmse,cra,status";

/// One point of a rate sweep. Metrics are absent when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: String,
    pub base_qp: u8,
    pub enhancement_qp: u8,
    pub total_bytes: Option<u64>,
    pub miou: Option<f64>,
    pub rmse: Option<f64>,
    pub cra: Option<f64>,
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Successful rows by ascending size, failed rows after them by QP.
pub fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        (a.total_bytes.is_none(), a.total_bytes, b.enhancement_qp).cmp(&(
            b.total_bytes.is_none(),
            b.total_bytes,
            a.enhancement_qp,
        ))
    });
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// Appends `rows` to the sweep table at `path`, creating it when missing.
/// An existing table with a different schema is left untouched.
pub fn append_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    if path.exists() {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let schema = lines.next().transpose()?.unwrap_or_default();
        let header = lines.next().transpose()?.unwrap_or_default();
        if schema != SWEEP_SCHEMA || header != SWEEP_HEADER {
            return Err(Error::Format(format!(
                "{} has a different schema; refusing to append",
                path.display()
            )));
        }
    } else {
        fs::write(path, format!("{SWEEP_SCHEMA}\n{SWEEP_HEADER}\n")).map_err(|e| Error::io(path, e))?;
    }
    let mut out = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run_id,
            r.base_qp,
            r.enhancement_qp,
            opt(r.total_bytes),
            opt(r.miou.map(|v| format!("{v:.6}"))),
            opt(r.rmse.map(|v| format!("{v:.6}"))),
            opt(r.cra.map(|v| format!("{v:.4}"))),
            csv_field(&r.status)
        )?;
    }
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_SCHEMA) || lines.next() != Some(SWEEP_HEADER) {
        return Err(Error::Format(format!("{} is not a sweep table", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let bad = || Error::Format(format!("sweep row {line:?}"));
            let f: Vec<&str> = line.splitn(8, ',').collect();
            if f.len() != 8 {
                return Err(bad());
            }
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad())
                }
            };
            Ok(SweepRow {
                run_id: f[0].to_string(),
                base_qp: f[1].parse().map_err(|_| bad())?,
                enhancement_qp: f[2].parse().map_err(|_| bad())?,
                total_bytes: num(f[3])?.map(|v| v as u64),
                miou: num(f[4])?,
                rmse: num(f[5])?,
                cra: num(f[6])?,
                status: f[7].trim_matches('"').replace("\"\"", "\""),
            })
        })
        .collect()
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 220.0;
const PAD: f64 = 45.0;

fn nice_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = (hi - lo).max(hi.abs() * 0.05).max(1e-9);
    (lo - 0.1 * span, hi + 0.1 * span)
}

/// Renders mIoU, RMSE and CRA against total size as three side-by-side
/// panels. Only successful rows are drawn.
pub fn render_svg(rows: &[SweepRow]) -> String {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let kb: Vec<f64> = ok.iter().map(|r| r.total_bytes.unwrap_or(0) as f64 / 1024.0).collect();
    let (x0, x1) = nice_range(&kb);
    let panels: [(&str, Vec<f64>); 3] = [
        ("mIoU", ok.iter().map(|r| r.miou.unwrap_or(0.0)).collect()),
        ("disparity RMSE", ok.iter().map(|r| r.rmse.unwrap_or(0.0)).collect()),
        ("CRA (%)", ok.iter().map(|r| r.cra.unwrap_or(0.0)).collect()),
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        3.0 * PANEL_W,
        PANEL_H
    );
    for (p, (title, ys)) in panels.iter().enumerate() {
        let ox = p as f64 * PANEL_W;
        let (y0, y1) = nice_range(ys);
        let px = |x: f64| ox + PAD + (x - x0) / (x1 - x0) * (PANEL_W - 1.5 * PAD);
        let py = |y: f64| PANEL_H - PAD - (y - y0) / (y1 - y0) * (PANEL_H - 1.7 * PAD);
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            ox + PAD,
            0.7 * PAD,
            PANEL_W - 1.5 * PAD,
            PANEL_H - 1.7 * PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="15" text-anchor="middle">{title}</text>"#,
            ox + PANEL_W / 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">total size (KiB)</text>"#,
            ox + PANEL_W / 2.0,
            PANEL_H - 8.0
        );
        for (v, y) in [(y0, py(y0)), (y1, py(y1))] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
                ox + PAD - 3.0,
                y
            );
        }
        for (v, x) in [(x0, px(x0)), (x1, px(x1))] {
            let _ = writeln!(
                s,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.0}</text>"#,
                PANEL_H - PAD + 14.0
            );
        }
        let pts: Vec<String> = kb
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="steelblue" points="{}"/>"#,
            pts.join(" ")
        );
        for ((&x, &y), r) in kb.iter().zip(ys).zip(&ok) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"><title>QP {}</title></circle>"#,
                px(x),
                py(y),
                r.enhancement_qp
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Provenance record written next to every command output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub parameters: serde_json::Value,
    /// Input file name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        Self {
            tool: format!("pfan {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            parameters,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn key(path: &Path, root: Option<&Path>) -> String {
        root.and_then(|r| path.strip_prefix(r).ok())
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    pub fn add_inputs(&mut self, files: &[PathBuf], root: Option<&Path>) -> Result<()> {
        for f in files {
            self.inputs.insert(Self::key(f, root), sha256_file(f)?);
        }
        Ok(())
    }

    pub fn add_outputs(&mut self, files: &[PathBuf], root: Option<&Path>) -> Result<()> {
        for f in files {
            self.outputs.insert(Self::key(f, root), sha256_file(f)?);
        }
        Ok(())
    }

    /// Short digest identifying the command, parameters and inputs.
    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(self.parameters.to_string().as_bytes());
        for (k, v) in &self.inputs {
            h.update(k.as_bytes());
            h.update(v.as_bytes());
        }
        h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

//! Bridge to an external image codec driven by command templates.
//!
//! Templates are split on whitespace and run without a shell. `{IN}`, `{OUT}`
//! and `{QP}` are substituted per argument. Mosaics are exchanged as binary
//! PGM (P5) files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::quant::Mosaic;

pub const ENCODE_ENV: &str = "PFAN_EXTERNAL_ENCODE";
pub const DECODE_ENV: &str = "PFAN_EXTERNAL_DECODE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCodec {
    /// Reads a PGM from `{IN}`, writes the coded stream to `{OUT}`.
    pub encode: String,
    /// Reads the coded stream from `{IN}`, writes a PGM to `{OUT}`.
    pub decode: String,
}

impl ExternalCodec {
    pub fn new(encode: impl Into<String>, decode: impl Into<String>) -> Result<Self> {
        let codec = Self {
            encode: encode.into(),
            decode: decode.into(),
        };
        for t in [&codec.encode, &codec.decode] {
            if !(t.contains("{IN}") && t.contains("{OUT}")) {
                return Err(Error::Argument(format!(
                    "command template {t:?} lacks {{IN}} or {{OUT}}"
                )));
            }
        }
        Ok(codec)
    }

    /// Reads both templates from the environment; `None` when either is unset.
    pub fn from_env() -> Result<Option<Self>> {
        match (std::env::var(ENCODE_ENV), std::env::var(DECODE_ENV)) {
            (Ok(e), Ok(d)) => Self::new(e, d).map(Some),
            _ => Ok(None),
        }
    }

    pub fn encode(&self, mosaic: &Mosaic, qp: u8) -> Result<Vec<u8>> {
        mosaic.validate()?;
        let dir = WorkDir::new()?;
        let input = dir.path("in.pgm");
        let output = dir.path("out.bin");
        write_pgm(&input, mosaic.pixel_width(), mosaic.pixel_height(), &mosaic.pixels)?;
        run(&self.encode, &input, &output, qp)?;
        fs::read(&output).map_err(|e| Error::io(&output, e))
    }

    pub fn decode(&self, bytes: &[u8], qp: u8, shape: &Mosaic) -> Result<Mosaic> {
        let dir = WorkDir::new()?;
        let input = dir.path("in.bin");
        let output = dir.path("out.pgm");
        fs::write(&input, bytes).map_err(|e| Error::io(&input, e))?;
        run(&self.decode, &input, &output, qp)?;
        let raw = fs::read(&output).map_err(|e| Error::io(&output, e))?;
        let (w, h, pixels) = parse_pgm(&raw)?;
        if (w, h) != (shape.pixel_width(), shape.pixel_height()) {
            return Err(Error::Decode(format!(
                "external decoder produced {w}x{h}, expected {}x{}",
                shape.pixel_width(),
                shape.pixel_height()
            )));
        }
        Ok(Mosaic {
            pixels,
            ..shape.clone()
        })
    }
}

/// Substitutes placeholders and splits into program and arguments.
pub fn expand_template(template: &str, input: &Path, output: &Path, qp: u8) -> Vec<String> {
    template
        .split_whitespace()
        .map(|arg| {
            arg.replace("{IN}", &input.to_string_lossy())
                .replace("{OUT}", &output.to_string_lossy())
                .replace("{QP}", &qp.to_string())
        })
        .collect()
}

fn run(template: &str, input: &Path, output: &Path, qp: u8) -> Result<()> {
    let argv = expand_template(template, input, output, qp);
    let command = argv.join(" ");
    let Some((program, args)) = argv.split_first() else {
        return Err(Error::Argument("empty external codec command".into()));
    };
    let out = Command::new(program)
        .args(args)
        .output()
        .map_err(|e| Error::Environment {
            message: format!("cannot run {program}: {e}"),
            command: command.clone(),
        })?;
    if !out.status.success() {
        return Err(Error::External {
            status: out.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            command,
        });
    }
    Ok(())
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses an 8-bit binary PGM, returning `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut at = 0;
    let mut fields = [0usize; 3];
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::Format("not a binary PGM".into()));
    }
    at += 2;
    for f in &mut fields {
        loop {
            match bytes.get(at) {
                Some(b'#') => {
                    while bytes.get(at).is_some_and(|&b| b != b'\n') {
                        at += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => at += 1,
                _ => break,
            }
        }
        let start = at;
        while bytes.get(at).is_some_and(u8::is_ascii_digit) {
            at += 1;
        }
        *f = std::str::from_utf8(&bytes[start..at])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad PGM header".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} is not 255")));
    }
    if !bytes.get(at).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("bad PGM header".into()));
    }
    at += 1;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let data = &bytes[at..];
    if data.len() != n {
        return Err(Error::Length {
            expected: n,
            found: data.len(),
        });
    }
    Ok((w, h, data.to_vec()))
}

/// Private scratch directory removed on drop.
struct WorkDir(PathBuf);

impl WorkDir {
    fn new() -> Result<Self> {
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let n = NEXT.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir().join(format!("pfan-ext-{}-{n}", std::process::id()));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self(dir))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for WorkDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

//! Length-prefixed transfer of layered streams over TCP.
//!
//! Each frame is a `u32` little-endian byte count followed by that many
//! bytes of container. A connection may carry several frames and ends with
//! a clean close between frames.

use std::fs;
use std::io::{ErrorKind as IoKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Frames above this size are refused before any allocation.
pub const MAX_FRAME: usize = 1 << 30;

pub fn write_frame<W: Write>(out: &mut W, payload: &[u8]) -> Result<()> {
    if payload.is_empty() {
        return Err(Error::Format("refusing to send a zero-length stream".into()));
    }
    if payload.len() > MAX_FRAME {
        return Err(Error::Format(format!(
            "stream of {} bytes exceeds frame limit",
            payload.len()
        )));
    }
    out.write_all(&(payload.len() as u32).to_le_bytes())?;
    out.write_all(payload)?;
    Ok(())
}

/// Reads as much of `buf` as the peer sends; returns the byte count.
fn fill<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match input.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == IoKind::Interrupted => {}
            Err(e) if got > 0 && e.kind() == IoKind::ConnectionReset => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// Next frame, or `None` when the peer closed cleanly between frames.
pub fn read_frame<R: Read>(input: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match fill(input, &mut len)? {
        0 => return Ok(None),
        4 => {}
        n => {
            return Err(Error::PartialFrame {
                expected: 4,
                received: n,
            })
        }
    }
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 {
        return Err(Error::Format("zero-length frame".into()));
    }
    if len > MAX_FRAME {
        return Err(Error::Format(format!("frame of {len} bytes exceeds limit")));
    }
    let mut payload = vec![0u8; len];
    let got = fill(input, &mut payload)?;
    if got != len {
        return Err(Error::PartialFrame {
            expected: len,
            received: got,
        });
    }
    Ok(Some(payload))
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Accepts connections until `limit` streams have arrived (forever when
/// `None`). A failed connection is reported and does not stop the server.
pub fn serve<F>(listener: &TcpListener, out_dir: &Path, limit: Option<usize>, mut on_error: F) -> Result<Vec<PathBuf>>
where
    F: FnMut(&Error),
{
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut all = Vec::new();
    while limit.is_none_or(|n| all.len() < n) {
        let (mut conn, _) = listener.accept()?;
        let mut index = all.len();
        loop {
            match read_frame(&mut conn) {
                Ok(Some(frame)) => {
                    let path = out_dir.join(format!("stream_{index:04}.pfan"));
                    write_atomic(&path, &frame)?;
                    all.push(path);
                    index += 1;
                }
                Ok(None) => break,
                Err(e) => {
                    on_error(&e);
                    break;
                }
            }
        }
    }
    Ok(all)
}

/// Sends the given container files over one connection, in order.
pub fn send<A: ToSocketAddrs>(addr: A, files: &[PathBuf]) -> Result<usize> {
    let payloads = files
        .iter()
        .map(|p| fs::read(p).map_err(|e| Error::io(p, e)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = payloads.iter().position(Vec::is_empty) {
        return Err(Error::Format(format!("{} is empty", files[i].display())));
    }
    let mut conn = TcpStream::connect(addr)?;
    let mut sent = 0;
    for p in &payloads {
        write_frame(&mut conn, p)?;
        sent += p.len();
    }
    conn.flush()?;
    conn.shutdown(std::net::Shutdown::Write)?;
    Ok(sent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn frames_round_trip_in_memory() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"PFAN-one").unwrap();
        write_frame(&mut buf, b"two").unwrap();
        let mut r = Cursor::new(buf);
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"PFAN-one");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"two");
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn zero_length_is_rejected_both_ways() {
        assert!(write_frame(&mut Vec::new(), b"").is_err());
        let mut r = Cursor::new(vec![0, 0, 0, 0]);
        assert!(matches!(read_frame(&mut r), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_partial_frame() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &[7u8; 100]).unwrap();
        buf.truncate(50);
        let err = read_frame(&mut Cursor::new(buf)).unwrap_err();
        assert!(matches!(
            err,
            Error::PartialFrame {
                expected: 100,
                received: 46
            }
        ));
        let err = read_frame(&mut Cursor::new(vec![1, 0])).unwrap_err();
        assert!(matches!(
            err,
            Error::PartialFrame {
                expected: 4,
                received: 2
            }
        ));
    }
}

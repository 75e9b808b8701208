//! Shared binary container used by dataset, estimate and model files.
//!
//! Layout: 8 magic bytes, a 4-byte big-endian header length, a UTF-8 JSON
//! header, then a little-endian payload of 8-byte words.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) const MAX_HEADER_LEN: u32 = 16 * 1024 * 1024;

pub(crate) fn write_header<W: Write, H: Serialize>(
    w: &mut W,
    magic: &[u8; 8],
    header: &H,
) -> Result<()> {
    let json =
        serde_json::to_vec(header).map_err(|e| Error::Structural(format!("header encode: {e}")))?;
    let len = u32::try_from(json.len()).map_err(|_| Error::structural("header too large"))?;
    w.write_all(magic)?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub(crate) fn read_header<R: Read, H: DeserializeOwned>(r: &mut R, magic: &[u8; 8]) -> Result<H> {
    let mut got = [0u8; 8];
    read_exact_or(r, &mut got, |_| {
        Error::CorruptHeader("file shorter than magic".into())
    })?;
    if &got != magic {
        return Err(Error::CorruptHeader(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len = [0u8; 4];
    read_exact_or(r, &mut len, |_| {
        Error::CorruptHeader("missing header length".into())
    })?;
    let len = u32::from_be_bytes(len);
    if len > MAX_HEADER_LEN {
        return Err(Error::CorruptHeader(format!(
            "header length {len} exceeds limit"
        )));
    }
    let mut json = vec![0u8; len as usize];
    read_exact_or(r, &mut json, |_| {
        Error::CorruptHeader("header shorter than declared".into())
    })?;
    serde_json::from_slice(&json).map_err(|e| Error::CorruptHeader(format!("header decode: {e}")))
}

fn read_exact_or<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    on_eof: impl FnOnce(&io::Error) -> Error,
) -> Result<()> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(on_eof(&e)),
        Err(e) => Err(e.into()),
    }
}

/// Little-endian payload reader that reports short reads as truncation.
pub(crate) struct Payload<R> {
    inner: R,
}

impl<R: Read> Payload<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner }
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        read_exact_or(&mut self.inner, &mut b, |_| {
            Error::Truncated("payload ended early".into())
        })?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub(crate) fn f64s(&mut self, out: &mut [f64]) -> Result<()> {
        let mut buf = vec![0u8; out.len() * 8];
        read_exact_or(&mut self.inner, &mut buf, |_| {
            Error::Truncated("payload ended early".into())
        })?;
        for (dst, src) in out.iter_mut().zip(buf.chunks_exact(8)) {
            *dst = f64::from_le_bytes(src.try_into().expect("chunk of 8"));
        }
        Ok(())
    }

    /// Fails if any bytes remain after the declared records.
    pub(crate) fn finish(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(Error::DimensionMismatch(
                "trailing bytes after declared records".into(),
            )),
        }
    }
}

pub(crate) fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for &v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    Ok(BufReader::new(std::fs::File::open(path)?))
}

/// `Write` sink that only hashes.
#[derive(Default)]
pub(crate) struct HashWriter(Sha256);

impl HashWriter {
    pub(crate) fn hex(self) -> String {
        hex::encode(self.0.finalize())
    }
}

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

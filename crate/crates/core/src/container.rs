//! Binary container shared by datasets, feature sets and embeddings.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic       8 bytes   "CHRTBIN\0"
//! version     u32       1
//! kind        u32       1 = complex f32 payload, 2 = real f32 payload
//! rank        u32       tensor rank, first axis is the row axis
//! pos_dim     u32       coordinates per position
//! dims        u64 x rank
//! meta_len    u64
//! meta        meta_len bytes of UTF-8 "key=value\n" lines, keys sorted
//! indices     u64 x rows
//! timestamps  f64 x rows
//! positions   f64 x rows x pos_dim
//! payload     f32 x prod(dims), interleaved re/im for complex payloads
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"CHRTBIN\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a chart container (bad magic bytes)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected payload: expected {expected}, found {found}")]
    WrongKind { expected: String, found: String },
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("missing metadata key `{0}`")]
    MissingMeta(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Complex32,
    Real32,
}

impl PayloadKind {
    fn code(self) -> u32 {
        match self {
            PayloadKind::Complex32 => 1,
            PayloadKind::Real32 => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self, FormatError> {
        match code {
            1 => Ok(PayloadKind::Complex32),
            2 => Ok(PayloadKind::Real32),
            other => Err(FormatError::Corrupt(format!("unknown payload kind {other}"))),
        }
    }

    fn floats_per_entry(self) -> usize {
        match self {
            PayloadKind::Complex32 => 2,
            PayloadKind::Real32 => 1,
        }
    }
}

/// In-memory image of one container file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: PayloadKind,
    pub dims: Vec<usize>,
    pub meta: BTreeMap<String, String>,
    pub indices: Vec<u64>,
    pub timestamps: Vec<f64>,
    pub pos_dim: usize,
    pub positions: Vec<f64>,
    pub payload: Vec<f32>,
}

impl Container {
    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn meta(&self, key: &str) -> Result<&str, FormatError> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| FormatError::MissingMeta(key.to_string()))
    }

    pub fn expect_kind(&self, kind: PayloadKind) -> Result<(), FormatError> {
        if self.kind != kind {
            return Err(FormatError::WrongKind { expected: format!("{kind:?}"), found: format!("{:?}", self.kind) });
        }
        Ok(())
    }

    pub fn expect_content(&self, content: &str) -> Result<(), FormatError> {
        let found = self.meta("content")?;
        if found != content {
            return Err(FormatError::WrongKind { expected: content.to_string(), found: found.to_string() });
        }
        Ok(())
    }

    fn check(&self) -> Result<(), FormatError> {
        let rows = self.rows();
        let entries: usize = self.dims.iter().product();
        if self.indices.len() != rows || self.timestamps.len() != rows || self.positions.len() != rows * self.pos_dim {
            return Err(FormatError::Corrupt("row arrays disagree with the leading dimension".into()));
        }
        if self.payload.len() != entries * self.kind.floats_per_entry() {
            return Err(FormatError::Corrupt("payload length disagrees with dims".into()));
        }
        for (k, v) in &self.meta {
            if k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(FormatError::Corrupt(format!("metadata entry `{k}` is not a single key=value line")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        self.check()?;
        let mut meta = String::new();
        for (k, v) in &self.meta {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        let mut out = Vec::with_capacity(64 + meta.len() + self.payload.len() * 4 + self.rows() * 24);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.pos_dim as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for &i in &self.indices {
            out.extend_from_slice(&i.to_le_bytes());
        }
        for &t in &self.timestamps {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for &p in &self.positions {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for &v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| FormatError::BadMagic)? != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let kind = PayloadKind::from_code(r.u32()?)?;
        let rank = r.u32()? as usize;
        let pos_dim = r.u32()? as usize;
        if rank == 0 || rank > 16 || pos_dim > 16 {
            return Err(FormatError::Corrupt(format!("implausible rank {rank} / pos_dim {pos_dim}")));
        }
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let meta_len = r.u64()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| FormatError::Corrupt("metadata is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in meta_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FormatError::Corrupt(format!("metadata line without `=`: {line}")))?;
            meta.insert(k.to_string(), v.to_string());
        }

        let rows = dims[0];
        let entries = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::Corrupt("dimension product overflows".into()))?;
        let needed = rows
            .checked_mul(16 + 8 * pos_dim)
            .and_then(|v| v.checked_add(entries.checked_mul(4 * kind.floats_per_entry())?))
            .ok_or_else(|| FormatError::Corrupt("payload size overflows".into()))?;
        if r.remaining() < needed {
            return Err(FormatError::Corrupt(format!(
                "truncated payload: {} bytes left, {} needed",
                r.remaining(),
                needed
            )));
        }
        if r.remaining() > needed {
            return Err(FormatError::Corrupt(format!("{} trailing bytes", r.remaining() - needed)));
        }
        let indices = (0..rows).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        let timestamps = (0..rows).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let positions = (0..rows * pos_dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let payload = r
            .take(entries * 4 * kind.floats_per_entry())?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Container { kind, dims, meta, indices, timestamps, pos_dim, positions, payload })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        let bytes = self.to_bytes()?;
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Corrupt(format!("unexpected end of file at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut meta = BTreeMap::new();
        meta.insert("content".to_string(), "test".to_string());
        Container {
            kind: PayloadKind::Real32,
            dims: vec![3, 2],
            meta,
            indices: vec![0, 1, 2],
            timestamps: vec![0.0, 0.005, 0.01],
            pos_dim: 2,
            positions: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            payload: vec![1.0, -2.0, 3.5, f32::MIN_POSITIVE, 0.0, -0.0],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Container::from_bytes(&bytes), Err(FormatError::BadMagic)));
        assert!(matches!(Container::from_bytes(b"CH"), Err(FormatError::BadMagic)));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8] = 9;
        assert!(matches!(Container::from_bytes(&bytes), Err(FormatError::UnsupportedVersion(9))));
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 7, 40] {
            assert!(matches!(Container::from_bytes(&bytes[..cut]), Err(FormatError::Corrupt(_))), "cut {cut}");
        }
    }

    #[test]
    fn multiline_metadata_rejected() {
        let mut c = sample();
        c.meta.insert("x".into(), "a\nb".into());
        assert!(c.to_bytes().is_err());
    }
}

//! Vocabulary, embedding vectors and token frequencies.
//!
//! Two on-disk encodings are supported and both are canonical: loading a
//! file written by [`EmbeddingStore::write_text`] or
//! [`EmbeddingStore::write_binary`] and writing it again reproduces the same
//! bytes.
//!
//! Text:
//!
//! ```text
//! #dim=<D> count=<N>
//! <surface>\t<frequency>\t<v_1> <v_2> ... <v_D>
//! ```
//!
//! Binary (little-endian): magic `SSHD`, version `u16`, `D: u32`, `N: u32`,
//! then per record a `u32` byte length and UTF-8 surface, a `u64` frequency
//! and `D` `f64` components.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"SSHD";
pub const STORE_VERSION: u16 = 1;

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreFormat {
    Text,
    Binary,
}

impl StoreFormat {
    /// Guess the format from a path extension: `.bin` is binary, anything
    /// else is text.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => StoreFormat::Binary,
            _ => StoreFormat::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
}

/// Immutable embedding store. Rows are indexed by [`TokenId`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    tokens: Vec<Token>,
    dim: usize,
    vectors: Vec<f64>,
    frequencies: Vec<u64>,
    by_surface: HashMap<String, TokenId>,
}

/// Builder-style record used to assemble a store in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    pub surface: String,
    pub frequency: u64,
    pub vector: Vec<f64>,
}

impl StoreRecord {
    pub fn new(surface: impl Into<String>, frequency: u64, vector: Vec<f64>) -> Self {
        Self {
            surface: surface.into(),
            frequency,
            vector,
        }
    }
}

impl EmbeddingStore {
    /// Build a store from in-memory records, checking every invariant.
    pub fn from_records(records: Vec<StoreRecord>) -> Result<Self> {
        let dim = match records.first() {
            Some(r) => r.vector.len(),
            None => return Err(Error::Structural("store has no tokens".into())),
        };
        Self::assemble(dim, records)
    }

    fn assemble(dim: usize, records: Vec<StoreRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if records.len() > TokenId::MAX as usize {
            return Err(Error::Structural("too many tokens".into()));
        }
        let mut tokens = Vec::with_capacity(records.len());
        let mut vectors = Vec::with_capacity(records.len() * dim);
        let mut frequencies = Vec::with_capacity(records.len());
        let mut by_surface = HashMap::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            validate_surface(&rec.surface)?;
            if rec.vector.len() != dim {
                return Err(Error::Structural(format!(
                    "token {:?} has dimension {}, expected {}",
                    rec.surface,
                    rec.vector.len(),
                    dim
                )));
            }
            if let Some(v) = rec.vector.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "token {:?} has a non-finite component {}",
                    rec.surface, v
                )));
            }
            if rec.vector.iter().all(|&v| v == 0.0) {
                return Err(Error::Validation(format!(
                    "token {:?} has an all-zero vector",
                    rec.surface
                )));
            }
            let id = i as TokenId;
            if by_surface.insert(rec.surface.clone(), id).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate surface {:?}",
                    rec.surface
                )));
            }
            vectors.extend_from_slice(&rec.vector);
            frequencies.push(rec.frequency);
            tokens.push(Token {
                id,
                surface: rec.surface,
            });
        }
        Ok(Self {
            tokens,
            dim,
            vectors,
            frequencies,
            by_surface,
        })
    }

    pub fn load(reader: impl Read, format: StoreFormat) -> Result<Self> {
        match format {
            StoreFormat::Text => Self::read_text(reader),
            StoreFormat::Binary => Self::read_binary(reader),
        }
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::load(BufReader::new(file), StoreFormat::from_path(path))
    }

    pub fn save(&self, writer: impl Write, format: StoreFormat) -> Result<()> {
        match format {
            StoreFormat::Text => self.write_text(writer),
            StoreFormat::Binary => self.write_binary(writer),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(|t| t.surface.as_str())
    }

    pub fn lookup(&self, surface: &str) -> Option<TokenId> {
        self.by_surface.get(surface).copied()
    }

    pub fn vector(&self, id: TokenId) -> &[f64] {
        let start = id as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn frequency(&self, id: TokenId) -> u64 {
        self.frequencies[id as usize]
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    pub fn records(&self) -> impl Iterator<Item = StoreRecord> + '_ {
        self.tokens.iter().map(move |t| StoreRecord {
            surface: t.surface.clone(),
            frequency: self.frequency(t.id),
            vector: self.vector(t.id).to_vec(),
        })
    }

    /// SHA-256 of the canonical binary encoding. Candidate tables record this
    /// value so they cannot be paired with a different store.
    pub fn checksum(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        self.write_binary(&mut HashWriter(&mut hasher))
            .expect("hashing never fails");
        hasher.finalize().into()
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "#dim={} count={}", self.dim, self.len())?;
        let mut line = String::new();
        for t in &self.tokens {
            use std::fmt::Write as _;
            line.clear();
            write!(line, "{}\t{}\t", t.surface, self.frequency(t.id)).unwrap();
            for (j, v) in self.vector(t.id).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{v}").unwrap();
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_text(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(text_io_error(1))?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
        };
        let (dim, count) = parse_header(&header)?;
        if dim == 0 {
            return Err(Error::Structural(
                "embedding dimension must be at least 1".into(),
            ));
        }
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line.map_err(text_io_error(lineno))?;
            records.push(parse_record(&line, lineno, dim)?);
        }
        if records.len() != count {
            return Err(Error::Structural(format!(
                "header declares {count} tokens, found {}",
                records.len()
            )));
        }
        Self::assemble(dim, records)
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for t in &self.tokens {
            let bytes = t.surface.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&self.frequency(t.id).to_le_bytes())?;
            for v in self.vector(t.id) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(mut reader: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        reader.read_to_end(&mut buf)?;
        let mut cur = crate::codec::Cursor::new(&buf);
        let magic = cur.bytes(4)?;
        if magic != STORE_MAGIC {
            return Err(Error::format("bad store magic"));
        }
        let version = cur.u16()?;
        if version != STORE_VERSION {
            return Err(Error::format(format!(
                "unsupported store version {version}"
            )));
        }
        let dim = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        if dim == 0 {
            return Err(Error::Structural(
                "embedding dimension must be at least 1".into(),
            ));
        }
        let mut records = Vec::with_capacity(count.min(cur.remaining() / 12 + 1));
        for rec in 0..count {
            let record_err = |e: Error| match e {
                Error::Format(msg) => Error::Parse { line: rec, msg },
                other => other,
            };
            let len = cur.u32().map_err(record_err)? as usize;
            let surface = std::str::from_utf8(cur.bytes(len).map_err(record_err)?)
                .map_err(|_| Error::Parse {
                    line: rec,
                    msg: "surface is not valid UTF-8".into(),
                })?
                .to_owned();
            let frequency = cur.u64().map_err(record_err)?;
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                vector.push(cur.f64().map_err(record_err)?);
            }
            records.push(StoreRecord {
                surface,
                frequency,
                vector,
            });
        }
        if cur.remaining() != 0 {
            return Err(Error::format(format!(
                "{} trailing bytes after last record",
                cur.remaining()
            )));
        }
        Self::assemble(dim, records)
    }
}

fn validate_surface(s: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Validation("empty token surface".into()));
    }
    if s.chars().any(char::is_whitespace) {
        return Err(Error::Validation(format!(
            "token surface {s:?} contains whitespace"
        )));
    }
    Ok(())
}

fn text_io_error(line: usize) -> impl Fn(std::io::Error) -> Error {
    move |e| {
        if e.kind() == std::io::ErrorKind::InvalidData {
            Error::Parse {
                line,
                msg: "invalid UTF-8".into(),
            }
        } else {
            Error::Io(e)
        }
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = |msg: &str| Error::Parse {
        line: 1,
        msg: format!("{msg}: {line:?}"),
    };
    let rest = line
        .strip_prefix("#dim=")
        .ok_or_else(|| bad("expected header `#dim=<D> count=<N>`"))?;
    let (dim, count) = rest
        .split_once(" count=")
        .ok_or_else(|| bad("expected header `#dim=<D> count=<N>`"))?;
    let dim = dim.parse().map_err(|_| bad("bad dimension"))?;
    let count = count.parse().map_err(|_| bad("bad count"))?;
    Ok((dim, count))
}

fn parse_record(line: &str, lineno: usize, dim: usize) -> Result<StoreRecord> {
    let bad = |msg: String| Error::Parse { line: lineno, msg };
    let mut fields = line.splitn(3, '\t');
    let surface = fields.next().unwrap_or_default();
    let freq = fields
        .next()
        .ok_or_else(|| bad("expected 3 tab-separated fields".into()))?;
    let values = fields
        .next()
        .ok_or_else(|| bad("expected 3 tab-separated fields".into()))?;
    if surface.is_empty() {
        return Err(bad("empty token surface".into()));
    }
    let frequency = freq
        .parse::<u64>()
        .map_err(|_| bad(format!("bad frequency {freq:?}")))?;
    let vector = values
        .split(' ')
        .map(|v| {
            let x: f64 = v.parse().map_err(|_| bad(format!("bad real {v:?}")))?;
            if !x.is_finite() {
                return Err(bad(format!("non-finite real {v:?}")));
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    if vector.len() != dim {
        return Err(Error::Structural(format!(
            "line {lineno}: token {surface:?} has dimension {}, expected {dim}",
            vector.len()
        )));
    }
    Ok(StoreRecord {
        surface: surface.to_owned(),
        frequency,
        vector,
    })
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = "#dim=2 count=3\nthe\t100\t1 0\ncat\t5\t0.6 0.8\ndog\t7\t-0.5 0.25\n";

    #[test]
    fn loads_well_formed_text() {
        let s = EmbeddingStore::read_text(THREE.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.lookup("cat"), Some(1));
        assert_eq!(s.vector(2), &[-0.5, 0.25]);
        assert_eq!(s.frequency(0), 100);
    }

    #[test]
    fn text_round_trip_is_byte_identical() {
        let s = EmbeddingStore::read_text(THREE.as_bytes()).unwrap();
        let mut out = Vec::new();
        s.write_text(&mut out).unwrap();
        assert_eq!(out, THREE.as_bytes());
    }

    #[test]
    fn binary_round_trip() {
        let s = EmbeddingStore::read_text(THREE.as_bytes()).unwrap();
        let mut bin = Vec::new();
        s.write_binary(&mut bin).unwrap();
        assert_eq!(&bin[..4], b"SSHD");
        let back = EmbeddingStore::read_binary(&bin[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let text = "#dim=2 count=2\na\t1\t1 0\nb\t1\t1 0 3\n";
        assert!(matches!(
            EmbeddingStore::read_text(text.as_bytes()),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn zero_vector_names_token() {
        let text = "#dim=2 count=2\na\t1\t1 0\nnil\t1\t0 0\n";
        match EmbeddingStore::read_text(text.as_bytes()) {
            Err(Error::Validation(msg)) => assert!(msg.contains("nil")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "#dim=2 count=2\na\t1\t1 0\nb\tmany\t1 0\n";
        match EmbeddingStore::read_text(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_and_missing_header() {
        let text = "#dim=2 count=3\na\t1\t1 0\n";
        assert!(matches!(
            EmbeddingStore::read_text(text.as_bytes()),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            EmbeddingStore::read_text("a\t1\t1 0\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_surface_and_nan_rejected() {
        let dup = "#dim=1 count=2\na\t1\t1\na\t2\t2\n";
        assert!(matches!(
            EmbeddingStore::read_text(dup.as_bytes()),
            Err(Error::Validation(_))
        ));
        let nan = "#dim=1 count=1\na\t1\tNaN\n";
        assert!(matches!(
            EmbeddingStore::read_text(nan.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let s = EmbeddingStore::read_text(THREE.as_bytes()).unwrap();
        let mut bin = Vec::new();
        s.write_binary(&mut bin).unwrap();
        for cut in [3, 10, bin.len() - 1] {
            assert!(EmbeddingStore::read_binary(&bin[..cut]).is_err());
        }
        bin.push(0);
        assert!(matches!(
            EmbeddingStore::read_binary(&bin[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn checksum_tracks_content() {
        let a = EmbeddingStore::read_text(THREE.as_bytes()).unwrap();
        let b = EmbeddingStore::read_text(THREE.replace("100", "101").as_bytes()).unwrap();
        assert_eq!(a.checksum(), a.clone().checksum());
        assert_ne!(a.checksum(), b.checksum());
    }
}

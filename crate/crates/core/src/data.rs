//! Embedding sets and their on-disk encodings.
//!
//! Embeddings are stored in the `EMB1` container: the 4-byte magic `EMB1`, a
//! little-endian `u32` row count, a little-endian `u32` dimension and then
//! `count * dim` little-endian `f32` values in row-major order. Labels live in
//! a separate `LBL1` file (magic, `u32` count, `count` little-endian `i32`).
//! A CSV reader is provided for small fixtures.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
pub const LABEL_MAGIC: &[u8; 4] = b"LBL1";

const HEADER_LEN: usize = 12;
const CSV_MAX_DIM: usize = 4096;
const CSV_MAX_ROWS: usize = 1_000_000;

/// Encoding of an embedding file on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// Guess the format from a file extension; anything other than `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

/// `count` rows of `dim`-dimensional `f32` features, optionally labelled.
///
/// Every value is finite and `data.len() == count * dim`. Instances are
/// immutable once built and may be shared across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    count: usize,
    dim: usize,
    data: Vec<f32>,
    labels: Option<Vec<i32>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("embedding dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Data(format!(
                "{} values do not form whole rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            count: data.len() / dim,
            dim,
            data,
            labels: None,
        })
    }

    /// Build from a slice of equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::arg("cannot infer dimension from zero rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "row {i} has {} values, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.count {
            return Err(Error::Data(format!(
                "{} labels for {} rows",
                labels.len(),
                self.count
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// New set made of the given rows, in the given order. Labels follow their rows.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.count {
                return Err(Error::arg(format!(
                    "row index {i} out of range for {} rows",
                    self.count
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self {
            count: indices.len(),
            dim: self.dim,
            data,
            labels,
        })
    }

    /// Multiply every value by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let set = Self::new(self.dim, self.data.iter().map(|v| v * factor).collect())?;
        Ok(Self {
            labels: self.labels.clone(),
            ..set
        })
    }

    /// SHA-256 over the canonical binary encoding (hex).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(encode_embeddings(self));
        hex::encode(hasher.finalize())
    }

    pub(crate) fn check_dim(&self, dim: usize, what: &str) -> Result<()> {
        if self.dim != dim {
            return Err(Error::arg(format!(
                "{what}: dimension mismatch ({} vs {dim})",
                self.dim
            )));
        }
        Ok(())
    }
}

pub fn encode_embeddings(set: &EmbeddingSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + set.data.len() * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&(set.count as u32).to_le_bytes());
    buf.extend_from_slice(&(set.dim as u32).to_le_bytes());
    for v in &set.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than the EMB1 header"));
    }
    if &bytes[..4] != EMBEDDING_MAGIC {
        return Err(Error::format(path, "bad magic, expected EMB1"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::format(path, "dimension must be positive"));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header size overflows"))?;
    if payload.len() != expected {
        return Err(Error::Length {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingSet::new(dim, data)
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    match format {
        EmbeddingFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_embeddings(&bytes, path)
        }
        EmbeddingFormat::Csv => load_csv(path),
    }
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(set)).map_err(|e| Error::io(path, e))
}

fn load_csv(path: &Path) -> Result<EmbeddingSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::format(
                    path,
                    format!("line {}: cannot parse {:?} as a float", lineno + 1, field),
                )
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match dim {
            None => {
                if width > CSV_MAX_DIM {
                    return Err(Error::format(
                        path,
                        format!("csv dimension {width} exceeds {CSV_MAX_DIM}"),
                    ));
                }
                dim = Some(width);
            }
            Some(d) if d != width => {
                return Err(Error::format(
                    path,
                    format!("line {}: {width} fields, expected {d}", lineno + 1),
                ));
            }
            Some(_) => {}
        }
        rows += 1;
        if rows > CSV_MAX_ROWS {
            return Err(Error::format(
                path,
                format!("csv exceeds {CSV_MAX_ROWS} rows"),
            ));
        }
    }
    let dim = dim.ok_or_else(|| Error::format(path, "csv file has no rows"))?;
    EmbeddingSet::new(dim, data)
}

pub fn save_labels(labels: &[i32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(8 + labels.len() * 4);
    buf.extend_from_slice(LABEL_MAGIC);
    buf.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for l in labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::format(path, "file shorter than the LBL1 header"));
    }
    if &bytes[..4] != LABEL_MAGIC {
        return Err(Error::format(path, "bad magic, expected LBL1"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let payload = &bytes[8..];
    if payload.len() != count * 4 {
        return Err(Error::Length {
            expected: count * 4,
            found: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Load embeddings and, if given, attach the labels file.
pub fn load_labelled(path: impl AsRef<Path>, labels: Option<&Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let set = load_embeddings(path, EmbeddingFormat::from_path(path))?;
    match labels {
        Some(l) => set.with_labels(load_labels(l)?),
        None => Ok(set),
    }
}

/// Sidecar manifest: one opaque external id per line, line `i` naming row `i`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn save_manifest(ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for id in ids {
        if id.contains('\n') {
            return Err(Error::Data(format!(
                "manifest id {id:?} contains a newline"
            )));
        }
        writeln!(out, "{id}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// SHA-256 of a file's bytes (hex).
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

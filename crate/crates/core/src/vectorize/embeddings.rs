//! Precomputed document embeddings in the `EMB1` binary layout.
//!
//! The matrix file holds the 4-byte magic `EMB1`, the row count and the
//! dimension as little-endian `u32`, then `rows × dim` little-endian `f32`
//! values in row-major order. A companion text file lists one document id
//! per line, in row order.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"EMB1";

/// Rows keyed by document id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub vectors: DenseMatrix,
}

pub fn encode_matrix(m: &DenseMatrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::invalid("too many rows for EMB1"))?;
    let dim = u32::try_from(m.cols()).map_err(|_| Error::invalid("dimension too large for EMB1"))?;
    let mut out = Vec::with_capacity(12 + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing EMB1 header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("EMB1 header overflows".into()))?;
    let body = &bytes[12..];
    if body.len() < expected {
        return Err(Error::Format(format!(
            "EMB1 truncated: expected {expected} data bytes, found {}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::Format(format!(
            "EMB1 has {} trailing bytes",
            body.len() - expected
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "non-finite value at row {}, column {}",
            pos / dim.max(1),
            pos % dim.max(1)
        )));
    }
    DenseMatrix::from_vec(rows, dim, data)
}

pub fn write_embeddings(
    matrix_path: impl AsRef<Path>,
    ids_path: impl AsRef<Path>,
    table: &EmbeddingTable,
) -> Result<()> {
    if table.ids.len() != table.vectors.rows() {
        return Err(Error::DimensionMismatch {
            expected: table.vectors.rows(),
            actual: table.ids.len(),
        });
    }
    let matrix_path = matrix_path.as_ref();
    fs::write(matrix_path, encode_matrix(&table.vectors)?).map_err(|e| Error::io(matrix_path, e))?;
    let ids_path = ids_path.as_ref();
    let mut f = fs::File::create(ids_path).map_err(|e| Error::io(ids_path, e))?;
    for id in &table.ids {
        writeln!(f, "{id}").map_err(|e| Error::io(ids_path, e))?;
    }
    Ok(())
}

pub fn read_embeddings(matrix_path: impl AsRef<Path>, ids_path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let matrix_path = matrix_path.as_ref();
    let bytes = fs::read(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let vectors = decode_matrix(&bytes)?;
    let ids_path = ids_path.as_ref();
    let text = fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if ids.len() != vectors.rows() {
        return Err(Error::Format(format!(
            "{} ids for {} embedding rows",
            ids.len(),
            vectors.rows()
        )));
    }
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(EmbeddingTable { ids, vectors })
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Rows reordered to follow `ids`. Every requested id must be present.
    pub fn align(&self, ids: &[&str]) -> Result<DenseMatrix> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let missing: Vec<String> = ids.iter().filter(|id| !index.contains_key(*id)).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(Error::Alignment { missing, extra: Vec::new() });
        }
        let rows: Vec<usize> = ids.iter().map(|id| index[id]).collect();
        Ok(self.vectors.select_rows(&rows))
    }
}

/// Reads an embedding file pair and aligns it to `dataset` order. The file
/// must cover exactly the dataset's documents.
pub fn load_embeddings(
    matrix_path: impl AsRef<Path>,
    ids_path: impl AsRef<Path>,
    dataset: &LabeledDataset,
) -> Result<DenseMatrix> {
    let table = read_embeddings(matrix_path, ids_path)?;
    let wanted: HashSet<&str> = dataset.documents().iter().map(|d| d.id.as_str()).collect();
    let have: HashSet<&str> = table.ids.iter().map(String::as_str).collect();
    let mut missing: Vec<String> = wanted.difference(&have).map(|s| s.to_string()).collect();
    let mut extra: Vec<String> = have.difference(&wanted).map(|s| s.to_string()).collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort();
        extra.sort();
        return Err(Error::Alignment { missing, extra });
    }
    let ids: Vec<&str> = dataset.documents().iter().map(|d| d.id.as_str()).collect();
    table.align(&ids)
}

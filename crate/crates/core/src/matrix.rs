//! Row-per-document numeric containers shared by every stage.
//!
//! [`FeatureMatrix`] is what representations produce and classifiers consume;
//! it is either compressed sparse rows or a dense row-major block.
//! [`LabelMatrix`] is the binary document × label indicator and
//! [`ScoreMatrix`] holds per-label probabilities in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Column indices within a row are strictly
/// increasing and no explicit zero is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row given as `(column, value)` pairs in any order.
    /// Duplicate columns are summed and zeros are dropped.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        let mut row: Vec<(usize, f64)> = entries.into_iter().collect();
        row.sort_by_key(|&(c, _)| c);
        let mut last: Option<usize> = None;
        for (c, v) in row {
            debug_assert!(c < self.cols);
            if last == Some(c) {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.indices.push(c as u32);
                self.values.push(v);
                last = Some(c);
            }
        }
        // drop entries that cancelled or were zero from the start
        let start = self.indptr[self.rows];
        let mut write = start;
        for read in start..self.indices.len() {
            if self.values[read] != 0.0 {
                self.indices[write] = self.indices[read];
                self.values[write] = self.values[read];
                write += 1;
            }
        }
        self.indices.truncate(write);
        self.values.truncate(write);
        self.rows += 1;
        self.indptr.push(self.indices.len());
    }

    pub fn from_rows(cols: usize, rows: impl IntoIterator<Item = Vec<(usize, f64)>>) -> Self {
        let mut m = Self::empty(cols);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_mut_values(&mut self, i: usize) -> &mut [f64] {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        &mut self.values[a..b]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&(j as u32)) {
            Ok(p) => val[p],
            Err(_) => 0.0,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut m = Self::empty(self.cols);
        for &r in rows {
            let (idx, val) = self.row(r);
            m.indices.extend_from_slice(idx);
            m.values.extend_from_slice(val);
            m.rows += 1;
            m.indptr.push(m.indices.len());
        }
        m
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            let out = d.row_mut(i);
            for (&c, &v) in idx.iter().zip(val) {
                out[c as usize] = v;
            }
        }
        d
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        CsrMatrix::from_rows(
            self.cols,
            (0..self.rows).map(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            }),
        )
    }
}

/// Feature representation of a set of documents, one row per document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMatrix {
    Sparse(CsrMatrix),
    Dense(DenseMatrix),
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::Sparse(m) => m.rows(),
            FeatureMatrix::Dense(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            FeatureMatrix::Sparse(m) => m.cols(),
            FeatureMatrix::Dense(m) => m.cols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureMatrix::Sparse(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            FeatureMatrix::Sparse(m) => m.get(i, j),
            FeatureMatrix::Dense(m) => m.get(i, j),
        }
    }

    /// Calls `f(column, value)` for every stored entry of row `i`.
    /// Dense rows report zeros as well.
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            FeatureMatrix::Sparse(m) => {
                let (idx, val) = m.row(i);
                for (&c, &v) in idx.iter().zip(val) {
                    f(c as usize, v);
                }
            }
            FeatureMatrix::Dense(m) => {
                for (c, &v) in m.row(i).iter().enumerate() {
                    f(c, v);
                }
            }
        }
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        match self {
            FeatureMatrix::Sparse(m) => {
                let mut out = vec![0.0; m.cols()];
                let (idx, val) = m.row(i);
                for (&c, &v) in idx.iter().zip(val) {
                    out[c as usize] = v;
                }
                out
            }
            FeatureMatrix::Dense(m) => m.row(i).to_vec(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        match self {
            FeatureMatrix::Sparse(m) => FeatureMatrix::Sparse(m.select_rows(rows)),
            FeatureMatrix::Dense(m) => FeatureMatrix::Dense(m.select_rows(rows)),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            FeatureMatrix::Sparse(m) => m.to_dense(),
            FeatureMatrix::Dense(m) => m.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            FeatureMatrix::Sparse(m) => m.values.iter().all(|v| v.is_finite()),
            FeatureMatrix::Dense(m) => m.data.iter().all(|v| v.is_finite()),
        }
    }
}

/// Binary documents × labels indicator matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            for (j, &v) in r.iter().enumerate() {
                if v > 1 {
                    return Err(Error::invalid(format!("label entry {v} is not binary")));
                }
                m.data[i * cols + j] = v;
            }
        }
        Ok(m)
    }

    /// Builds a matrix from per-row positive label indices.
    pub fn from_positives(cols: usize, rows: &[Vec<usize>]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            for &j in r {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j] != 0
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.cols + j] = u8::from(v);
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn positives(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|&v| v as usize).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.cols];
        for i in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v as usize;
            }
        }
        sums
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Per-label scores in `[0, 1]`, documents × labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix(DenseMatrix);

impl ScoreMatrix {
    pub fn new(scores: DenseMatrix) -> Result<Self> {
        if let Some(bad) = scores
            .as_slice()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::invalid(format!("score {bad} outside [0, 1]")));
        }
        Ok(Self(scores))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.0
    }

    /// `score >= threshold` per cell.
    pub fn threshold(&self, threshold: f64) -> LabelMatrix {
        let mut out = LabelMatrix::zeros(self.rows(), self.cols());
        for (o, &s) in out.data.iter_mut().zip(self.0.as_slice()) {
            *o = u8::from(s >= threshold);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_drops_zeros_and_merges_duplicates() {
        let m = CsrMatrix::from_rows(4, vec![vec![(2, 1.0), (0, 0.0), (2, 2.0), (1, -1.0), (1, 1.0)]]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn dense_and_sparse_forms_agree() {
        let d = DenseMatrix::from_rows(&[vec![0.0, 1.5, 0.0], vec![2.0, 0.0, -3.0]]).unwrap();
        let s = d.to_sparse();
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), d);
    }

    #[test]
    fn threshold_edge_is_inclusive() {
        let s = ScoreMatrix::new(DenseMatrix::from_rows(&[vec![0.49, 0.51, 0.5]]).unwrap()).unwrap();
        assert_eq!(s.threshold(0.5).row(0), &[0, 1, 1]);
    }

    #[test]
    fn score_matrix_rejects_out_of_range() {
        let d = DenseMatrix::from_rows(&[vec![1.2]]).unwrap();
        assert!(ScoreMatrix::new(d).is_err());
    }
}

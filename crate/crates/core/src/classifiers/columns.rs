//! Column-major view of a feature matrix with each column's non-zero
//! entries sorted by value. Zeros are implicit, so sparse inputs stay cheap.

use crate::matrix::FeatureMatrix;

pub struct ColumnIndex {
    ptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl ColumnIndex {
    pub fn new(x: &FeatureMatrix) -> Self {
        let n_cols = x.cols();
        let mut counts = vec![0usize; n_cols];
        for i in 0..x.rows() {
            x.for_each_in_row(i, |j, v| {
                if v != 0.0 {
                    counts[j] += 1;
                }
            });
        }
        let mut ptr = vec![0usize; n_cols + 1];
        for j in 0..n_cols {
            ptr[j + 1] = ptr[j] + counts[j];
        }
        let nnz = ptr[n_cols];
        let mut rows = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = ptr.clone();
        for i in 0..x.rows() {
            x.for_each_in_row(i, |j, v| {
                if v != 0.0 {
                    rows[fill[j]] = i as u32;
                    values[fill[j]] = v;
                    fill[j] += 1;
                }
            });
        }
        let mut order: Vec<(f64, u32)> = Vec::new();
        for j in 0..n_cols {
            let (a, b) = (ptr[j], ptr[j + 1]);
            order.clear();
            order.extend(values[a..b].iter().copied().zip(rows[a..b].iter().copied()));
            order.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            for (k, (v, r)) in order.iter().enumerate() {
                values[a + k] = *v;
                rows[a + k] = *r;
            }
        }
        Self {
            ptr,
            rows,
            values,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn nnz(&self, col: usize) -> usize {
        self.ptr[col + 1] - self.ptr[col]
    }

    /// `(rows, values)` of the non-zero entries, ascending by value.
    pub fn column(&self, col: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.ptr[col], self.ptr[col + 1]);
        (&self.rows[a..b], &self.values[a..b])
    }

    /// Replaces each value by the upper edge of its quantile bin, leaving at
    /// most `bins` distinct non-zero values per column.
    pub fn quantize(&mut self, bins: usize) {
        let bins = bins.max(1);
        for j in 0..self.n_cols() {
            let (a, b) = (self.ptr[j], self.ptr[j + 1]);
            let n = b - a;
            if n == 0 {
                continue;
            }
            let mut edges: Vec<f64> = (1..=bins)
                .map(|k| self.values[a + ((k * n).div_ceil(bins)).saturating_sub(1).min(n - 1)])
                .collect();
            edges.dedup();
            let mut e = 0;
            for v in &mut self.values[a..b] {
                while *v > edges[e] {
                    e += 1;
                }
                // negative values must stay on their side of zero
                if *v < 0.0 && edges[e] >= 0.0 {
                    continue;
                }
                *v = edges[e];
            }
        }
    }
}

/// Midpoint threshold strictly below `hi` so that `lo <= t < hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t >= hi {
        lo
    } else {
        t
    }
}

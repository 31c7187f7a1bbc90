//! Small dense kernels for the truncated SVD: products against a sparse or
//! dense operand, Gram-Schmidt orthonormalization and a one-sided Jacobi SVD.

use crate::matrix::{DenseMatrix, FeatureMatrix};

/// `A · B` where `B` has `A.cols()` rows.
pub fn mul(a: &FeatureMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    let l = b.cols();
    let mut out = DenseMatrix::zeros(a.rows(), l);
    for i in 0..a.rows() {
        let mut acc = vec![0.0; l];
        a.for_each_in_row(i, |j, v| {
            if v != 0.0 {
                for (o, &x) in acc.iter_mut().zip(b.row(j)) {
                    *o += v * x;
                }
            }
        });
        out.row_mut(i).copy_from_slice(&acc);
    }
    out
}

/// `Aᵀ · B` where `B` has `A.rows()` rows.
pub fn mul_transpose(a: &FeatureMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.rows(), b.rows());
    let l = b.cols();
    let mut out = DenseMatrix::zeros(a.cols(), l);
    for i in 0..a.rows() {
        let src = b.row(i);
        a.for_each_in_row(i, |j, v| {
            if v != 0.0 {
                for (o, &x) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        });
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis for the column span of `m` (same shape). Columns that
/// are numerically dependent on earlier ones come back as zero vectors.
pub fn orthonormalize_columns(m: &DenseMatrix) -> DenseMatrix {
    let mut cols = m.transpose();
    let n = cols.cols();
    let mut done: Vec<bool> = Vec::with_capacity(cols.rows());
    for j in 0..cols.rows() {
        let original = dot(cols.row(j), cols.row(j)).sqrt();
        // two passes of modified Gram-Schmidt keep orthogonality at machine precision
        for _ in 0..2 {
            for i in 0..j {
                if !done[i] {
                    continue;
                }
                let (head, tail) = cols.as_mut_slice().split_at_mut(j * n);
                let qi = &head[i * n..(i + 1) * n];
                let v = &mut tail[..n];
                let r = dot(qi, v);
                for (x, &q) in v.iter_mut().zip(qi) {
                    *x -= r * q;
                }
            }
        }
        let norm = dot(cols.row(j), cols.row(j)).sqrt();
        let keep = norm > 1e-12 * original.max(f64::MIN_POSITIVE) && norm > 0.0;
        for x in cols.row_mut(j) {
            *x = if keep { *x / norm } else { 0.0 };
        }
        done.push(keep);
    }
    cols.transpose()
}

/// Thin SVD `m = U · diag(s) · Vᵀ` of an `n × p` matrix, singular values
/// sorted descending. `U` is `n × p`, `V` is `p × p`.
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub v: DenseMatrix,
}

pub fn jacobi_svd(m: &DenseMatrix) -> Svd {
    let p = m.cols();
    let n = m.rows();
    let mut w = m.transpose(); // row j is column j of m
    let mut vt = DenseMatrix::zeros(p, p); // row j is column j of V
    for j in 0..p {
        vt.set(j, j, 1.0);
    }
    let eps = f64::EPSILON;
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let alpha = dot(w.row(i), w.row(i));
                let beta = dot(w.row(j), w.row(j));
                let gamma = dot(w.row(i), w.row(j));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, i, j, c, s, n);
                rotate(&mut vt, i, j, c, s, p);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..p).map(|j| (dot(w.row(j), w.row(j)).sqrt(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut u = DenseMatrix::zeros(n, p);
    let mut v = DenseMatrix::zeros(p, p);
    let mut s = Vec::with_capacity(p);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s.push(sigma);
        for r in 0..n {
            u.set(r, k, if sigma > 0.0 { w.get(j, r) / sigma } else { 0.0 });
        }
        for r in 0..p {
            v.set(r, k, vt.get(j, r));
        }
    }
    Svd { u, s, v }
}

fn rotate(m: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64, len: usize) {
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(j * len);
    let ri = &mut head[i * len..(i + 1) * len];
    let rj = &mut tail[..len];
    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

//! Latent semantic analysis: seeded randomized truncated SVD of a TF-IDF
//! matrix. Documents are projected onto the top right singular vectors,
//! i.e. `X · V`, which equals `U · Σ` on the fitted matrix.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{jacobi_svd, mul, mul_transpose, orthonormalize_columns};
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsaParams {
    pub n_components: usize,
    /// Extra sketch columns beyond `n_components`.
    pub oversample: usize,
    /// Subspace iterations always performed.
    pub power_iterations: usize,
    /// Further iterations run until the leading singular values move by
    /// less than this relative amount.
    pub tolerance: f64,
    pub max_power_iterations: usize,
    pub seed: u64,
}

impl Default for LsaParams {
    fn default() -> Self {
        Self {
            n_components: 100,
            oversample: 10,
            power_iterations: 6,
            tolerance: 1e-12,
            max_power_iterations: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaModel {
    /// `features × n_components`, orthonormal columns.
    pub basis: DenseMatrix,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// Subspace iterations actually run.
    pub iterations: usize,
}

/// Thin SVD of a tall `n × l` block through a QR step, so the Jacobi
/// rotations only touch an `l × l` factor.
fn tall_svd(w: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let q = orthonormalize_columns(w);
    let r = mul_transpose(&FeatureMatrix::Dense(q.clone()), w);
    let svd = jacobi_svd(&r);
    let u = mul(&FeatureMatrix::Dense(q), &svd.u);
    (u, svd.s)
}

pub fn fit_lsa(x: &FeatureMatrix, params: &LsaParams) -> Result<LsaModel> {
    let (m, n) = (x.rows(), x.cols());
    let k = params.n_components;
    let kmax = m.min(n);
    if k == 0 || k > kmax {
        return Err(Error::invalid(format!(
            "n_components {k} must lie in [1, min(rows, cols) = {kmax}]"
        )));
    }
    if !x.all_finite() {
        return Err(Error::invalid("LSA input contains non-finite values"));
    }
    let l = (k + params.oversample).min(kmax);
    let mut r = rng::seeded(params.seed);
    let omega = DenseMatrix::from_vec(
        n,
        l,
        (0..n * l).map(|_| StandardNormal.sample(&mut r)).collect(),
    )?;
    let mut q = orthonormalize_columns(&mul(x, &omega));
    let mut previous: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let (basis_full, sigma) = loop {
        if iterations >= params.power_iterations {
            let (u, s) = tall_svd(&mul_transpose(x, &q));
            let converged = previous.as_ref().is_some_and(|p| {
                p.iter()
                    .zip(&s)
                    .take(k)
                    .all(|(a, b)| (a - b).abs() <= params.tolerance * b.abs().max(f64::MIN_POSITIVE))
            });
            if converged || iterations >= params.max_power_iterations.max(params.power_iterations) {
                break (u, s);
            }
            previous = Some(s);
        }
        let z = orthonormalize_columns(&mul_transpose(x, &q));
        q = orthonormalize_columns(&mul(x, &z));
        iterations += 1;
    };

    let top = sigma[0];
    if !(top > 0.0) || sigma[k - 1] <= top * 1e-10 {
        return Err(Error::invalid(format!(
            "n_components {k} exceeds the numerical rank of the input"
        )));
    }
    let mut basis = DenseMatrix::zeros(n, k);
    for i in 0..n {
        basis.row_mut(i).copy_from_slice(&basis_full.row(i)[..k]);
    }
    Ok(LsaModel {
        basis,
        singular_values: sigma[..k].to_vec(),
        iterations,
    })
}

impl LsaModel {
    pub fn n_components(&self) -> usize {
        self.singular_values.len()
    }

    pub fn project(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.cols() != self.basis.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.rows(),
                actual: x.cols(),
            });
        }
        Ok(FeatureMatrix::Dense(mul(x, &self.basis)))
    }

    /// Maps projected coordinates back to feature space (`P · Vᵀ`).
    pub fn reconstruct(&self, projected: &DenseMatrix) -> DenseMatrix {
        mul(&FeatureMatrix::Dense(projected.clone()), &self.basis.transpose())
    }
}

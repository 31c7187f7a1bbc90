//! Latent Dirichlet allocation fitted by batch variational EM.
//!
//! The variational posterior over topic-word distributions is Dirichlet
//! (`lambda`), per-document topic proportions are Dirichlet (`gamma`), and
//! word-topic responsibilities are kept implicit. Every half-step is an exact
//! coordinate maximization, so the evidence lower bound never decreases.
//! Document `gamma` values are warm-started across EM iterations.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaParams {
    pub n_topics: usize,
    pub max_iter: usize,
    /// Document-topic prior; `None` means `1 / n_topics`.
    pub alpha: Option<f64>,
    /// Topic-word prior.
    pub beta: f64,
    pub seed: u64,
    pub doc_max_iter: usize,
    pub doc_tolerance: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self {
            n_topics: 10,
            max_iter: 10,
            alpha: None,
            beta: 0.01,
            seed: 0,
            doc_max_iter: 100,
            doc_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub doc_max_iter: usize,
    pub doc_tolerance: f64,
    /// Variational Dirichlet parameters, `n_topics × vocabulary`.
    pub lambda: DenseMatrix,
    /// Evidence lower bound after each EM iteration.
    pub elbo: Vec<f64>,
}

/// Per-document topic proportions plus the rows that had no tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicInference {
    pub proportions: FeatureMatrix,
    pub empty_documents: Vec<usize>,
}

struct Doc<'a> {
    words: &'a [u32],
    counts: Vec<f64>,
}

fn documents(x: &FeatureMatrix) -> Result<Vec<Doc<'_>>> {
    let FeatureMatrix::Sparse(m) = x else {
        return Err(Error::invalid("LDA expects a sparse count matrix"));
    };
    let mut docs = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let (idx, val) = m.row(i);
        if let Some(bad) = val.iter().find(|v| !(v.is_finite() && **v >= 0.0 && v.fract() == 0.0)) {
            return Err(Error::invalid(format!("LDA count {bad} in row {i} is not a non-negative integer")));
        }
        docs.push(Doc {
            words: idx,
            counts: val.to_vec(),
        });
    }
    Ok(docs)
}

/// `exp(E[log x])` for `x ~ Dirichlet(params)`.
fn exp_dirichlet_expectation(params: &[f64], out: &mut [f64]) {
    let total = digamma(params.iter().sum());
    for (o, &p) in out.iter_mut().zip(params) {
        *o = (digamma(p) - total).exp();
    }
}

/// `V × K` table of `exp(E[log beta_kw])`.
fn exp_topic_word(lambda: &DenseMatrix) -> DenseMatrix {
    let (k, v) = (lambda.rows(), lambda.cols());
    let mut out = DenseMatrix::zeros(v, k);
    let mut row = vec![0.0; v];
    for t in 0..k {
        exp_dirichlet_expectation(lambda.row(t), &mut row);
        for (w, &e) in row.iter().enumerate() {
            out.set(w, t, e);
        }
    }
    out
}

fn phi_norms(doc: &Doc, theta: &[f64], eb: &DenseMatrix, out: &mut Vec<f64>) {
    out.clear();
    for &w in doc.words {
        let dot: f64 = theta.iter().zip(eb.row(w as usize)).map(|(a, b)| a * b).sum();
        out.push(dot + 1e-100);
    }
}

/// Coordinate ascent on one document's `gamma`. On return `theta` and
/// `norms` correspond to the final `gamma`.
fn update_document(
    doc: &Doc,
    eb: &DenseMatrix,
    alpha: f64,
    gamma: &mut [f64],
    theta: &mut [f64],
    norms: &mut Vec<f64>,
    max_iter: usize,
    tol: f64,
) {
    let k = gamma.len();
    exp_dirichlet_expectation(gamma, theta);
    phi_norms(doc, theta, eb, norms);
    let mut acc = vec![0.0; k];
    for _ in 0..max_iter {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for ((&w, &c), &n) in doc.words.iter().zip(&doc.counts).zip(norms.iter()) {
            let coef = c / n;
            for (a, &e) in acc.iter_mut().zip(eb.row(w as usize)) {
                *a += coef * e;
            }
        }
        let mut change = 0.0;
        for t in 0..k {
            let g = alpha + theta[t] * acc[t];
            change += (g - gamma[t]).abs();
            gamma[t] = g;
        }
        exp_dirichlet_expectation(gamma, theta);
        phi_norms(doc, theta, eb, norms);
        if change / (k as f64) < tol {
            break;
        }
    }
}

fn elbo(docs: &[Doc], gamma: &DenseMatrix, lambda: &DenseMatrix, alpha: f64, beta: f64) -> f64 {
    let (k, v) = (lambda.rows(), lambda.cols());
    let eb = exp_topic_word(lambda);
    let mut theta = vec![0.0; k];
    let mut norms = Vec::new();
    let mut total = 0.0;
    for (d, doc) in docs.iter().enumerate() {
        let g = gamma.row(d);
        exp_dirichlet_expectation(g, &mut theta);
        phi_norms(doc, &theta, &eb, &mut norms);
        total += doc.counts.iter().zip(&norms).map(|(c, n)| c * n.ln()).sum::<f64>();
        let dg = digamma(g.iter().sum());
        for &gt in g {
            total += (alpha - gt) * (digamma(gt) - dg) + ln_gamma(gt) - ln_gamma(alpha);
        }
        total += ln_gamma(k as f64 * alpha) - ln_gamma(g.iter().sum());
    }
    for t in 0..k {
        let row = lambda.row(t);
        let dl = digamma(row.iter().sum());
        for &l in row {
            total += (beta - l) * (digamma(l) - dl) + ln_gamma(l) - ln_gamma(beta);
        }
        total += ln_gamma(v as f64 * beta) - ln_gamma(row.iter().sum());
    }
    total
}

pub fn fit_lda(counts: &FeatureMatrix, params: &LdaParams) -> Result<LdaModel> {
    if params.n_topics < 2 {
        return Err(Error::invalid("n_topics must be at least 2"));
    }
    if params.max_iter < 1 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let alpha = params.alpha.unwrap_or(1.0 / params.n_topics as f64);
    if !(alpha > 0.0 && params.beta > 0.0) {
        return Err(Error::invalid("LDA priors must be positive"));
    }
    let docs = documents(counts)?;
    if docs.is_empty() {
        return Err(Error::invalid("LDA needs at least one document"));
    }
    let (k, v) = (params.n_topics, counts.cols());

    let mut r = rng::seeded(params.seed);
    let init = Gamma::new(100.0, 0.01).expect("valid gamma");
    let mut lambda = DenseMatrix::from_vec(k, v, (0..k * v).map(|_| init.sample(&mut r)).collect())?;

    let mut gamma = DenseMatrix::zeros(docs.len(), k);
    for (d, doc) in docs.iter().enumerate() {
        let n: f64 = doc.counts.iter().sum();
        gamma.row_mut(d).iter_mut().for_each(|g| *g = alpha + n / k as f64);
    }

    let mut trace = Vec::with_capacity(params.max_iter);
    let mut theta = vec![0.0; k];
    let mut norms = Vec::new();
    for _ in 0..params.max_iter {
        let eb = exp_topic_word(&lambda);
        let mut stats = DenseMatrix::zeros(v, k);
        for (d, doc) in docs.iter().enumerate() {
            update_document(
                doc,
                &eb,
                alpha,
                gamma.row_mut(d),
                &mut theta,
                &mut norms,
                params.doc_max_iter,
                params.doc_tolerance,
            );
            for ((&w, &c), &n) in doc.words.iter().zip(&doc.counts).zip(&norms) {
                let coef = c / n;
                for (s, &t) in stats.row_mut(w as usize).iter_mut().zip(&theta) {
                    *s += coef * t;
                }
            }
        }
        for t in 0..k {
            for w in 0..v {
                lambda.set(t, w, params.beta + stats.get(w, t) * eb.get(w, t));
            }
        }
        trace.push(elbo(&docs, &gamma, &lambda, alpha, params.beta));
    }

    Ok(LdaModel {
        n_topics: k,
        alpha,
        beta: params.beta,
        max_iter: params.max_iter,
        doc_max_iter: params.doc_max_iter,
        doc_tolerance: params.doc_tolerance,
        lambda,
        elbo: trace,
    })
}

impl LdaModel {
    /// Expected topic-word distributions; each row sums to one.
    pub fn topic_word(&self) -> DenseMatrix {
        let mut out = self.lambda.clone();
        for t in 0..out.rows() {
            let row = out.row_mut(t);
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        out
    }

    pub fn vocabulary_size(&self) -> usize {
        self.lambda.cols()
    }

    /// Topic proportions per document. Documents without tokens get the
    /// uniform distribution and are listed in `empty_documents`.
    pub fn infer(&self, counts: &FeatureMatrix) -> Result<TopicInference> {
        if counts.cols() != self.vocabulary_size() {
            return Err(Error::DimensionMismatch {
                expected: self.vocabulary_size(),
                actual: counts.cols(),
            });
        }
        let docs = documents(counts)?;
        let k = self.n_topics;
        let eb = exp_topic_word(&self.lambda);
        let mut out = DenseMatrix::zeros(docs.len(), k);
        let mut empty = Vec::new();
        let mut theta = vec![0.0; k];
        let mut norms = Vec::new();
        for (d, doc) in docs.iter().enumerate() {
            let n: f64 = doc.counts.iter().sum();
            if n == 0.0 {
                empty.push(d);
                out.row_mut(d).iter_mut().for_each(|x| *x = 1.0 / k as f64);
                continue;
            }
            let mut gamma = vec![self.alpha + n / k as f64; k];
            update_document(
                doc,
                &eb,
                self.alpha,
                &mut gamma,
                &mut theta,
                &mut norms,
                self.doc_max_iter,
                self.doc_tolerance,
            );
            let s: f64 = gamma.iter().sum();
            for (o, g) in out.row_mut(d).iter_mut().zip(&gamma) {
                *o = g / s;
            }
        }
        Ok(TopicInference {
            proportions: FeatureMatrix::Dense(out),
            empty_documents: empty,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::CsrMatrix;

    fn blocks(n: usize) -> FeatureMatrix {
        // words 0..5 belong to block A, 5..10 to block B
        FeatureMatrix::Sparse(CsrMatrix::from_rows(
            10,
            (0..n).map(|i| {
                let base = if i % 2 == 0 { 0 } else { 5 };
                (0..5).map(|w| (base + w, ((i + w) % 3 + 1) as f64)).collect()
            }),
        ))
    }

    fn params() -> LdaParams {
        LdaParams {
            n_topics: 2,
            max_iter: 20,
            seed: 3,
            ..LdaParams::default()
        }
    }

    #[test]
    fn topic_rows_are_distributions() {
        let m = fit_lda(&blocks(40), &params()).unwrap();
        for row in m.topic_word().as_slice().chunks(10) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn elbo_never_decreases() {
        let m = fit_lda(&blocks(40), &params()).unwrap();
        for w in m.elbo.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0), "{:?}", m.elbo);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = fit_lda(&blocks(30), &params()).unwrap();
        let b = fit_lda(&blocks(30), &params()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_documents_are_uniform_and_flagged() {
        let m = fit_lda(&blocks(20), &params()).unwrap();
        let x = FeatureMatrix::Sparse(CsrMatrix::from_rows(10, vec![vec![(0, 2.0)], vec![]]));
        let inf = m.infer(&x).unwrap();
        assert_eq!(inf.empty_documents, vec![1]);
        assert_eq!(inf.proportions.row_dense(1), vec![0.5, 0.5]);
        assert!((inf.proportions.row_dense(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_input() {
        let frac = FeatureMatrix::Sparse(CsrMatrix::from_rows(2, vec![vec![(0, 0.5)]]));
        assert!(fit_lda(&frac, &params()).is_err());
        let one = LdaParams { n_topics: 1, ..params() };
        assert!(fit_lda(&blocks(4), &one).is_err());
    }
}

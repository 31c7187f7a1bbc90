//! Paragraph vectors, distributed bag-of-words variant (PV-DBOW).
//!
//! Each document vector is trained to predict the words of its document
//! against `negative` noise words drawn from the unigram distribution raised
//! to 0.75. Training is single-threaded and fully determined by the seed.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Doc2VecParams {
    pub vector_size: usize,
    pub min_count: usize,
    pub epochs: usize,
    pub negative: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Gradient passes used by [`Doc2VecModel::infer_vector`].
    pub infer_steps: usize,
    pub seed: u64,
}

impl Default for Doc2VecParams {
    fn default() -> Self {
        Self {
            vector_size: 100,
            min_count: 1,
            epochs: 20,
            negative: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            infer_steps: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doc2VecModel {
    pub params: Doc2VecParams,
    /// Words ordered by descending count, then lexicographically.
    pub words: Vec<String>,
    pub counts: Vec<usize>,
    /// Output (context) vectors, `words × vector_size`.
    pub word_vectors: DenseMatrix,
    /// Trained vectors of the fitting documents.
    pub doc_vectors: DenseMatrix,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    noise_cdf: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Doc2VecModel {
    fn rebuild(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let mut acc = 0.0;
        self.noise_cdf = self
            .counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        let total = acc;
        self.noise_cdf.iter_mut().for_each(|x| *x /= total);
    }

    /// Restores lookup tables after deserialization.
    pub fn prepare(mut self) -> Self {
        self.rebuild();
        self
    }

    pub fn vector_size(&self) -> usize {
        self.params.vector_size
    }

    fn sample_noise(&self, r: &mut rng::Rng) -> usize {
        let u: f64 = r.gen();
        self.noise_cdf.partition_point(|&c| c < u).min(self.words.len() - 1)
    }

    fn word_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index.get(t.as_ref()).copied()).collect()
    }

    /// One negative-sampling step for `(doc, word)`. Returns the accumulated
    /// document-vector gradient in `grad`; output vectors are updated only
    /// when `train_words` is set.
    fn step(
        &self,
        word_vectors: &mut DenseMatrix,
        doc: &[f64],
        grad: &mut [f64],
        word: usize,
        lr: f64,
        r: &mut rng::Rng,
        train_words: bool,
    ) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for n in 0..=self.params.negative {
            let (target, label) = if n == 0 {
                (word, 1.0)
            } else {
                let t = self.sample_noise(r);
                if t == word {
                    continue;
                }
                (t, 0.0)
            };
            let out = word_vectors.row_mut(target);
            let f: f64 = doc.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
            let g = (label - sigmoid(f)) * lr;
            for (gr, &o) in grad.iter_mut().zip(out.iter()) {
                *gr += g * o;
            }
            if train_words {
                for (o, &d) in out.iter_mut().zip(doc) {
                    *o += g * d;
                }
            }
        }
    }

    fn initial_vector(&self, r: &mut rng::Rng) -> Vec<f64> {
        let dim = self.params.vector_size as f64;
        (0..self.params.vector_size)
            .map(|_| (r.gen::<f64>() - 0.5) / dim)
            .collect()
    }

    /// Vector for an unseen document: a seeded start point refined by
    /// `steps` passes over its tokens with the output vectors frozen.
    pub fn infer_vector<S: AsRef<str>>(&self, tokens: &[S], steps: usize) -> Vec<f64> {
        let joined: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let mut r = rng::seeded(rng::derive(self.params.seed, rng::hash_str(&joined.join(" "))));
        let mut doc = self.initial_vector(&mut r);
        let ids = self.word_ids(tokens);
        if ids.is_empty() || steps == 0 {
            return doc;
        }
        let mut frozen = self.word_vectors.clone();
        let mut grad = vec![0.0; self.params.vector_size];
        let total = (steps * ids.len()) as f64;
        let mut done = 0.0;
        for _ in 0..steps {
            for &w in &ids {
                let lr = self.params.learning_rate
                    - (self.params.learning_rate - self.params.min_learning_rate) * done / total;
                self.step(&mut frozen, &doc, &mut grad, w, lr, &mut r, false);
                for (d, g) in doc.iter_mut().zip(&grad) {
                    *d += g;
                }
                done += 1.0;
            }
        }
        doc
    }

    pub fn infer_matrix<S: AsRef<str>>(&self, docs: &[Vec<S>], steps: usize) -> FeatureMatrix {
        let mut out = DenseMatrix::zeros(docs.len(), self.params.vector_size);
        for (i, d) in docs.iter().enumerate() {
            out.row_mut(i).copy_from_slice(&self.infer_vector(d, steps));
        }
        FeatureMatrix::Dense(out)
    }
}

pub fn train_doc2vec<S: AsRef<str>>(corpus: &[Vec<S>], params: &Doc2VecParams) -> Result<Doc2VecModel> {
    if params.min_count < 1 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    if params.vector_size < 1 {
        return Err(Error::invalid("vector_size must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for t in doc {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= params.min_count).collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary(format!(
            "no token occurs at least {} times",
            params.min_count
        )));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let dim = params.vector_size;
    let mut model = Doc2VecModel {
        params: *params,
        words: vocab.iter().map(|(w, _)| w.to_string()).collect(),
        counts: vocab.iter().map(|&(_, c)| c).collect(),
        word_vectors: DenseMatrix::zeros(vocab.len(), dim),
        doc_vectors: DenseMatrix::zeros(corpus.len(), dim),
        index: HashMap::new(),
        noise_cdf: Vec::new(),
    };
    model.rebuild();

    let mut r = rng::seeded(params.seed);
    let mut docs = DenseMatrix::zeros(corpus.len(), dim);
    for i in 0..corpus.len() {
        let v = model.initial_vector(&mut r);
        docs.row_mut(i).copy_from_slice(&v);
    }
    let ids: Vec<Vec<usize>> = corpus.iter().map(|d| model.word_ids(d)).collect();
    let total = (params.epochs * ids.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut done = 0.0;
    let mut words = std::mem::replace(&mut model.word_vectors, DenseMatrix::zeros(0, 0));
    let mut grad = vec![0.0; dim];
    for _ in 0..params.epochs {
        for (d, doc_ids) in ids.iter().enumerate() {
            for &w in doc_ids {
                let lr = params.learning_rate - (params.learning_rate - params.min_learning_rate) * done / total;
                let doc = docs.row(d).to_vec();
                model.step(&mut words, &doc, &mut grad, w, lr, &mut r, true);
                for (x, g) in docs.row_mut(d).iter_mut().zip(&grad) {
                    *x += g;
                }
                done += 1.0;
            }
        }
    }
    model.word_vectors = words;
    model.doc_vectors = docs;
    if !model.word_vectors.as_slice().iter().chain(model.doc_vectors.as_slice()).all(|v| v.is_finite()) {
        return Err(Error::Divergence { batch: 0 });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        (0..20)
            .map(|i| {
                let words: &[&str] = if i % 2 == 0 { &["alpha", "beta", "gamma"] } else { &["delta", "eps", "zeta"] };
                words.iter().map(|w| w.to_string()).collect()
            })
            .collect()
    }

    fn params() -> Doc2VecParams {
        Doc2VecParams {
            vector_size: 16,
            epochs: 5,
            seed: 9,
            ..Doc2VecParams::default()
        }
    }

    #[test]
    fn zero_steps_returns_seeded_initialization() {
        let m = train_doc2vec(&corpus(), &params()).unwrap();
        let v = m.infer_vector(&["alpha", "beta"], 0);
        assert_eq!(v.len(), 16);
        assert!(v.iter().map(|x| x * x).sum::<f64>() > 0.0);
        assert_eq!(v, m.infer_vector(&["alpha", "beta"], 0));
        assert_ne!(v, m.infer_vector(&["alpha", "beta"], 3));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = train_doc2vec(&corpus(), &params()).unwrap();
        let b = train_doc2vec(&corpus(), &params()).unwrap();
        assert_eq!(a.word_vectors, b.word_vectors);
        assert_eq!(a.doc_vectors, b.doc_vectors);
        assert_eq!(a.infer_vector(&["zeta"], 10), b.infer_vector(&["zeta"], 10));
    }

    #[test]
    fn min_count_can_empty_the_vocabulary() {
        let p = Doc2VecParams { min_count: 100, ..params() };
        assert!(matches!(train_doc2vec(&corpus(), &p), Err(Error::EmptyVocabulary(_))));
    }

    #[test]
    fn vectors_are_finite_and_sized() {
        let m = train_doc2vec(&corpus(), &params()).unwrap();
        assert_eq!(m.doc_vectors.cols(), 16);
        assert_eq!(m.word_vectors.rows(), 6);
        assert!(m.doc_vectors.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn serde_round_trip_preserves_inference() {
        let m = train_doc2vec(&corpus(), &params()).unwrap();
        let back: Doc2VecModel = serde_json::from_str::<Doc2VecModel>(&serde_json::to_string(&m).unwrap())
            .unwrap()
            .prepare();
        assert_eq!(back.infer_vector(&["alpha"], 5), m.infer_vector(&["alpha"], 5));
    }
}

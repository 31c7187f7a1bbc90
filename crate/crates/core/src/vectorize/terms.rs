//! Token vocabularies with document-frequency filtering, raw counts and
//! smoothed TF-IDF.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, FeatureMatrix};

/// Whitespace tokenizer over normalized text. Intra-token `.` survives, so
/// code literals such as `f32.9` stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Fit-time constraints on the token vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermFilter {
    /// Keep at most this many tokens, by total corpus frequency.
    pub max_features: Option<usize>,
    /// Minimum number of documents containing the token.
    pub min_df: usize,
    /// Maximum fraction of documents containing the token.
    pub max_df: f64,
}

impl Default for TermFilter {
    fn default() -> Self {
        Self {
            max_features: None,
            min_df: 1,
            max_df: 1.0,
        }
    }
}

impl TermFilter {
    pub fn validate(&self) -> Result<()> {
        if self.min_df < 1 {
            return Err(Error::invalid("min_df must be at least 1"));
        }
        if !(self.max_df > 0.0 && self.max_df <= 1.0) {
            return Err(Error::invalid("max_df must lie in (0, 1]"));
        }
        if self.max_features == Some(0) {
            return Err(Error::invalid("max_features must be at least 1"));
        }
        Ok(())
    }
}

/// Token → column map with the document frequencies seen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TokenVocabularyState", into = "TokenVocabularyState")]
pub struct TokenVocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_documents: usize,
    filter: TermFilter,
    index: HashMap<String, usize>,
}

/// Persisted form: tokens in column order with their document frequencies.
#[derive(Serialize, Deserialize)]
struct TokenVocabularyState {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_documents: usize,
    filter: TermFilter,
}

impl From<TokenVocabularyState> for TokenVocabulary {
    fn from(s: TokenVocabularyState) -> Self {
        let mut v = Self {
            tokens: s.tokens,
            doc_freq: s.doc_freq,
            n_documents: s.n_documents,
            filter: s.filter,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }
}

impl From<TokenVocabulary> for TokenVocabularyState {
    fn from(v: TokenVocabulary) -> Self {
        Self {
            tokens: v.tokens,
            doc_freq: v.doc_freq,
            n_documents: v.n_documents,
            filter: v.filter,
        }
    }
}

impl TokenVocabulary {
    pub fn fit<S: AsRef<str>>(corpus: &[Vec<S>], filter: TermFilter) -> Result<Self> {
        filter.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyVocabulary("corpus has no documents".into()));
        }
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for doc in corpus {
            let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            for t in &seen {
                *tf.entry(t).or_default() += 1;
            }
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = corpus.len();
        let max_count = filter.max_df * n as f64;
        let mut kept: Vec<(&str, usize)> = df
            .into_iter()
            .filter(|&(_, d)| d >= filter.min_df && d as f64 <= max_count + 1e-9)
            .collect();
        if let Some(limit) = filter.max_features {
            if kept.len() > limit {
                kept.sort_by(|a, b| tf[b.0].cmp(&tf[a.0]).then(a.0.cmp(b.0)));
                kept.truncate(limit);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary("no token satisfies min_df/max_df".into()));
        }
        kept.sort_by(|a, b| a.0.cmp(b.0));
        let mut v = Self {
            tokens: kept.iter().map(|(t, _)| t.to_string()).collect(),
            doc_freq: kept.iter().map(|&(_, d)| d).collect(),
            n_documents: n,
            filter,
            index: HashMap::new(),
        };
        v.rebuild_index();
        Ok(v)
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn filter(&self) -> TermFilter {
        self.filter
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// In-vocabulary `(column, count)` pairs for one document.
    fn counts<S: AsRef<str>>(&self, doc: &[S]) -> Vec<(usize, f64)> {
        let mut cols: Vec<usize> = doc.iter().filter_map(|t| self.column(t.as_ref())).collect();
        cols.sort_unstable();
        let mut out: Vec<(usize, f64)> = Vec::new();
        for c in cols {
            match out.last_mut() {
                Some((last, n)) if *last == c => *n += 1.0,
                _ => out.push((c, 1.0)),
            }
        }
        out
    }
}

/// Raw term counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowVectorizer {
    pub vocabulary: TokenVocabulary,
}

impl BowVectorizer {
    pub fn transform<S: AsRef<str>>(&self, docs: &[Vec<S>]) -> FeatureMatrix {
        FeatureMatrix::Sparse(CsrMatrix::from_rows(
            self.vocabulary.len(),
            docs.iter().map(|d| self.vocabulary.counts(d)),
        ))
    }
}

pub fn fit_bow<S: AsRef<str>>(corpus: &[Vec<S>], filter: TermFilter) -> Result<BowVectorizer> {
    Ok(BowVectorizer {
        vocabulary: TokenVocabulary::fit(corpus, filter)?,
    })
}

/// `tf · (ln((1 + N) / (1 + df)) + 1)` with L2-normalized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub vocabulary: TokenVocabulary,
}

impl TfidfVectorizer {
    pub fn idf(&self) -> Vec<f64> {
        let n = self.vocabulary.n_documents() as f64;
        self.vocabulary
            .doc_freq()
            .iter()
            .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect()
    }

    pub fn transform<S: AsRef<str>>(&self, docs: &[Vec<S>]) -> FeatureMatrix {
        let idf = self.idf();
        FeatureMatrix::Sparse(CsrMatrix::from_rows(
            self.vocabulary.len(),
            docs.iter().map(|d| {
                let mut row = self.vocabulary.counts(d);
                for (c, v) in row.iter_mut() {
                    *v *= idf[*c];
                }
                let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (_, v) in row.iter_mut() {
                        *v /= norm;
                    }
                }
                row
            }),
        ))
    }
}

pub fn fit_tfidf<S: AsRef<str>>(corpus: &[Vec<S>], filter: TermFilter) -> Result<TfidfVectorizer> {
    Ok(TfidfVectorizer {
        vocabulary: TokenVocabulary::fit(corpus, filter)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<&'static str>> {
        vec![vec!["a", "b", "a"], vec!["b", "c"]]
    }

    #[test]
    fn hand_counted_bow() {
        let bow = fit_bow(&corpus(), TermFilter::default()).unwrap();
        assert_eq!(bow.vocabulary.tokens(), &["a", "b", "c"]);
        let FeatureMatrix::Sparse(m) = bow.transform(&corpus()) else { unreachable!() };
        assert_eq!(m.to_dense().row(0), &[2.0, 1.0, 0.0]);
        assert_eq!(m.to_dense().row(1), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn max_df_excludes_ubiquitous_tokens() {
        let f = TermFilter { max_df: 0.5, ..TermFilter::default() };
        let bow = fit_bow(&corpus(), f).unwrap();
        assert_eq!(bow.vocabulary.tokens(), &["a", "c"]);
    }

    #[test]
    fn min_df_and_max_features() {
        let docs = vec![vec!["x", "x", "x", "y"], vec!["y", "z"], vec!["y", "x"]];
        let f = TermFilter { min_df: 2, ..TermFilter::default() };
        assert_eq!(fit_bow(&docs, f).unwrap().vocabulary.tokens(), &["x", "y"]);
        let f = TermFilter { max_features: Some(1), ..TermFilter::default() };
        // x occurs 4 times, y 3 times
        assert_eq!(fit_bow(&docs, f).unwrap().vocabulary.tokens(), &["x"]);
    }

    #[test]
    fn unseen_tokens_give_zero_rows() {
        let bow = fit_bow(&corpus(), TermFilter::default()).unwrap();
        assert_eq!(bow.transform(&[vec!["z"]]).to_dense().row(0), &[0.0, 0.0, 0.0]);
        let tfidf = fit_tfidf(&corpus(), TermFilter::default()).unwrap();
        assert_eq!(tfidf.transform(&[vec!["z"]]).to_dense().row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn fit_errors() {
        let empty: Vec<Vec<&str>> = Vec::new();
        assert!(matches!(fit_bow(&empty, TermFilter::default()), Err(Error::EmptyVocabulary(_))));
        let f = TermFilter { min_df: 5, ..TermFilter::default() };
        assert!(matches!(fit_bow(&corpus(), f), Err(Error::EmptyVocabulary(_))));
        let f = TermFilter { max_df: 0.0, ..TermFilter::default() };
        assert!(matches!(fit_bow(&corpus(), f), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn single_document_tfidf() {
        let docs = vec![vec!["a", "b"]];
        let t = fit_tfidf(&docs, TermFilter::default()).unwrap();
        let idf = t.idf();
        assert_eq!(idf[0], idf[1]);
        let row = t.transform(&docs).to_dense();
        let h = 1.0 / 2f64.sqrt();
        assert!((row.get(0, 0) - h).abs() < 1e-15 && (row.get(0, 1) - h).abs() < 1e-15);
    }

    #[test]
    fn ubiquitous_token_has_unit_idf() {
        let docs = vec![vec!["a", "b"], vec!["a"], vec!["a", "c"], vec!["a"]];
        let t = fit_tfidf(&docs, TermFilter::default()).unwrap();
        assert_eq!(t.idf()[0], 1.0);
    }

    #[test]
    fn serialized_state_round_trips() {
        let t = fit_tfidf(&corpus(), TermFilter::default()).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: TfidfVectorizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.transform(&corpus()), t.transform(&corpus()));
    }
}

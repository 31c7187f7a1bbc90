//! Text representations: bag of words, TF-IDF, LSA, LDA topic proportions,
//! paragraph vectors and externally computed embeddings.
//!
//! Every representation is fitted on training documents only and then
//! applied unchanged to validation and test documents.

mod doc2vec;
mod embeddings;
mod lda;
pub(crate) mod linalg;
mod lsa;
mod terms;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use doc2vec::{train_doc2vec, Doc2VecModel, Doc2VecParams};
pub use embeddings::{
    decode_matrix, encode_matrix, load_embeddings, read_embeddings, write_embeddings, EmbeddingTable, MAGIC,
};
pub use lda::{fit_lda, LdaModel, LdaParams, TopicInference};
pub use lsa::{fit_lsa, LsaModel, LsaParams};
pub use terms::{fit_bow, fit_tfidf, tokenize, BowVectorizer, TermFilter, TfidfVectorizer, TokenVocabulary};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Which representation to fit, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    Bow {
        #[serde(default)]
        filter: TermFilter,
    },
    Tfidf {
        #[serde(default)]
        filter: TermFilter,
    },
    Lsa {
        #[serde(default)]
        filter: TermFilter,
        #[serde(default)]
        params: LsaParams,
    },
    Lda {
        #[serde(default)]
        filter: TermFilter,
        #[serde(default)]
        params: LdaParams,
    },
    Doc2vec {
        #[serde(default)]
        params: Doc2VecParams,
    },
    Embeddings {
        matrix: PathBuf,
        ids: PathBuf,
    },
}

impl Default for Representation {
    fn default() -> Self {
        Representation::Tfidf {
            filter: TermFilter::default(),
        }
    }
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::Bow { .. } => "bow",
            Representation::Tfidf { .. } => "tfidf",
            Representation::Lsa { .. } => "lsa",
            Representation::Lda { .. } => "lda",
            Representation::Doc2vec { .. } => "doc2vec",
            Representation::Embeddings { .. } => "embeddings",
        }
    }

    /// Replaces the seed of stochastic representations.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Representation::Lsa { params, .. } => params.seed = seed,
            Representation::Lda { params, .. } => params.seed = seed,
            Representation::Doc2vec { params } => params.seed = seed,
            _ => {}
        }
        self
    }

    /// Fits on the training documents. `ids` are needed only by the
    /// embedding lookup.
    pub fn fit(&self, ids: &[&str], tokens: &[Vec<String>]) -> Result<FittedRepresentation> {
        if ids.len() != tokens.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: tokens.len(),
            });
        }
        Ok(match self {
            Representation::Bow { filter } => FittedRepresentation::Bow(fit_bow(tokens, *filter)?),
            Representation::Tfidf { filter } => FittedRepresentation::Tfidf(fit_tfidf(tokens, *filter)?),
            Representation::Lsa { filter, params } => {
                let tfidf = fit_tfidf(tokens, *filter)?;
                let model = fit_lsa(&tfidf.transform(tokens), params)?;
                FittedRepresentation::Lsa { tfidf, model }
            }
            Representation::Lda { filter, params } => {
                let bow = fit_bow(tokens, *filter)?;
                let model = fit_lda(&bow.transform(tokens), params)?;
                FittedRepresentation::Lda { bow, model }
            }
            Representation::Doc2vec { params } => FittedRepresentation::Doc2vec(train_doc2vec(tokens, params)?),
            Representation::Embeddings { matrix, ids: ids_path } => {
                let table = read_embeddings(matrix, ids_path)?;
                table.align(ids)?;
                FittedRepresentation::Embeddings {
                    matrix: matrix.clone(),
                    ids: ids_path.clone(),
                    table: Some(table),
                }
            }
        })
    }
}

/// A fitted representation. Serializes to a self-contained JSON state,
/// except for embeddings, which keep only their file paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedRepresentation {
    Bow(BowVectorizer),
    Tfidf(TfidfVectorizer),
    Lsa {
        tfidf: TfidfVectorizer,
        model: LsaModel,
    },
    Lda {
        bow: BowVectorizer,
        model: LdaModel,
    },
    Doc2vec(Doc2VecModel),
    Embeddings {
        matrix: PathBuf,
        ids: PathBuf,
        #[serde(skip)]
        table: Option<EmbeddingTable>,
    },
}

impl FittedRepresentation {
    pub fn name(&self) -> &'static str {
        match self {
            FittedRepresentation::Bow(_) => "bow",
            FittedRepresentation::Tfidf(_) => "tfidf",
            FittedRepresentation::Lsa { .. } => "lsa",
            FittedRepresentation::Lda { .. } => "lda",
            FittedRepresentation::Doc2vec(_) => "doc2vec",
            FittedRepresentation::Embeddings { .. } => "embeddings",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FittedRepresentation::Bow(b) => b.vocabulary.len(),
            FittedRepresentation::Tfidf(t) => t.vocabulary.len(),
            FittedRepresentation::Lsa { model, .. } => model.n_components(),
            FittedRepresentation::Lda { model, .. } => model.n_topics,
            FittedRepresentation::Doc2vec(m) => m.vector_size(),
            FittedRepresentation::Embeddings { table, .. } => table.as_ref().map_or(0, EmbeddingTable::dim),
        }
    }

    pub fn transform(&self, ids: &[&str], tokens: &[Vec<String>]) -> Result<FeatureMatrix> {
        if ids.len() != tokens.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: tokens.len(),
            });
        }
        match self {
            FittedRepresentation::Bow(b) => Ok(b.transform(tokens)),
            FittedRepresentation::Tfidf(t) => Ok(t.transform(tokens)),
            FittedRepresentation::Lsa { tfidf, model } => model.project(&tfidf.transform(tokens)),
            FittedRepresentation::Lda { bow, model } => Ok(model.infer(&bow.transform(tokens))?.proportions),
            FittedRepresentation::Doc2vec(m) => Ok(m.infer_matrix(tokens, m.params.infer_steps)),
            FittedRepresentation::Embeddings { table, matrix, .. } => {
                let table = table
                    .as_ref()
                    .ok_or_else(|| Error::MissingArtifact(matrix.clone()))?;
                Ok(FeatureMatrix::Dense(table.align(ids)?))
            }
        }
    }

    /// Rebuilds lookup state that is not serialized.
    pub fn restore(self) -> Result<Self> {
        Ok(match self {
            FittedRepresentation::Doc2vec(m) => FittedRepresentation::Doc2vec(m.prepare()),
            FittedRepresentation::Embeddings { matrix, ids, .. } => {
                let table = read_embeddings(&matrix, &ids)?;
                FittedRepresentation::Embeddings {
                    matrix,
                    ids,
                    table: Some(table),
                }
            }
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice::<Self>(&bytes)?.restore()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> (Vec<&'static str>, Vec<Vec<String>>) {
        let raw = [
            "dolor toracico agudo",
            "ansiedad generalizada cronica",
            "dolor abdominal agudo",
            "ansiedad con crisis de panico",
            "episodio depresivo leve",
            "episodio depresivo grave",
        ];
        let ids = vec!["a", "b", "c", "d", "e", "f"];
        (ids, raw.iter().map(|t| tokenize(t)).collect())
    }

    #[test]
    fn every_representation_round_trips_through_json() {
        let (ids, toks) = docs();
        let reps = [
            Representation::Bow { filter: TermFilter::default() },
            Representation::Tfidf { filter: TermFilter::default() },
            Representation::Lsa {
                filter: TermFilter::default(),
                params: LsaParams { n_components: 3, ..LsaParams::default() },
            },
            Representation::Lda {
                filter: TermFilter::default(),
                params: LdaParams { n_topics: 2, ..LdaParams::default() },
            },
            Representation::Doc2vec {
                params: Doc2VecParams { vector_size: 8, epochs: 3, infer_steps: 5, ..Doc2VecParams::default() },
            },
        ];
        for rep in reps {
            let fitted = rep.fit(&ids, &toks).unwrap();
            let x = fitted.transform(&ids, &toks).unwrap();
            assert_eq!(x.rows(), 6);
            assert_eq!(x.cols(), fitted.dim());
            let json = serde_json::to_string(&fitted).unwrap();
            let back = serde_json::from_str::<FittedRepresentation>(&json).unwrap().restore().unwrap();
            assert_eq!(back.transform(&ids, &toks).unwrap(), x, "{}", rep.name());
        }
    }

    #[test]
    fn config_parses_from_tagged_json() {
        let r: Representation = serde_json::from_str(r#"{"kind":"lsa","params":{"n_components":5}}"#).unwrap();
        assert!(matches!(r, Representation::Lsa { params, .. } if params.n_components == 5));
    }

    #[test]
    fn embeddings_follow_requested_ids() {
        let dir = tempfile::tempdir().unwrap();
        let (mp, ip) = (dir.path().join("m.bin"), dir.path().join("m.ids"));
        let table = EmbeddingTable {
            ids: vec!["x".into(), "y".into()],
            vectors: crate::matrix::DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        };
        write_embeddings(&mp, &ip, &table).unwrap();
        let rep = Representation::Embeddings { matrix: mp, ids: ip };
        let toks = vec![Vec::new(), Vec::new()];
        let fitted = rep.fit(&["y", "x"], &toks).unwrap();
        let m = fitted.transform(&["y", "x"], &toks).unwrap().to_dense();
        assert_eq!(m.row(0), &[3.0, 4.0]);
        assert!(fitted.transform(&["z", "x"], &toks).is_err());
    }
}

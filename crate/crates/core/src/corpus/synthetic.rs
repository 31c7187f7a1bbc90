//! Seeded long-tail corpus generator.
//!
//! Each label owns a few invented signature tokens; a document's text is the
//! (possibly corrupted) signature tokens of its labels mixed with shared
//! clinical filler words. Label popularity follows a Zipf law over label
//! rank, rank 1 being vocabulary position 0. The companion dense matrix is a
//! noiseless encoding of each document's label set.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Document, LabeledDataset};
use super::vocabulary::{LabelEntry, LabelVocabulary};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_documents: usize,
    pub n_labels: usize,
    pub zipf_exponent: f64,
    pub keywords_per_label: usize,
    pub paraphrase_noise: f64,
    pub multi_label_rate: f64,
    pub seed: u64,
    /// Width of the oracle embedding.
    pub oracle_dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_documents: 10_000,
            n_labels: 85,
            zipf_exponent: 1.1,
            keywords_per_label: 3,
            paraphrase_noise: 0.2,
            multi_label_rate: 0.15,
            seed: 7,
            oracle_dim: 64,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_labels < 1 {
            return Err(Error::invalid("n_labels must be at least 1"));
        }
        if !(self.zipf_exponent > 0.0) || !self.zipf_exponent.is_finite() {
            return Err(Error::invalid("zipf_exponent must be positive"));
        }
        if self.keywords_per_label < 1 {
            return Err(Error::invalid("keywords_per_label must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.paraphrase_noise) {
            return Err(Error::invalid("paraphrase_noise must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.multi_label_rate) {
            return Err(Error::invalid("multi_label_rate must lie in [0, 1)"));
        }
        if self.oracle_dim < ORACLE_ACTIVE {
            return Err(Error::invalid(format!("oracle_dim must be at least {ORACLE_ACTIVE}")));
        }
        Ok(())
    }

    /// Expected share of documents whose first label has the given 1-based rank.
    pub fn zipf_mass(&self, rank: usize) -> f64 {
        let norm: f64 = (1..=self.n_labels)
            .map(|r| (r as f64).powf(-self.zipf_exponent))
            .sum();
        (rank as f64).powf(-self.zipf_exponent) / norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dataset: LabeledDataset,
    /// Noiseless label-set encoding, one row per document.
    pub oracle: DenseMatrix,
    /// Signature tokens per label, in vocabulary order.
    pub signatures: Vec<Vec<String>>,
}

const ORACLE_ACTIVE: usize = 3;
const MAX_LABELS_PER_DOC: usize = 4;

const FILLER: &[&str] = &[
    "paciente", "refiere", "acude", "consulta", "valoracion", "evolución", "diagnóstico",
    "antecedentes", "tratamiento", "seguimiento", "episodio", "cuadro", "clínico", "actual",
    "previo", "familiar", "madre", "padre", "urgencias", "derivado", "psiquiatría", "control",
    "estable", "leve", "moderado", "grave", "crónico", "agudo", "síntomas", "presenta",
    "desde", "hace", "meses", "años", "semanas", "sin", "con", "por", "para", "del", "la",
    "el", "los", "las", "una", "un", "en", "de", "y", "que", "no", "se", "al", "juicio",
    "orientación", "impresión", "revisión", "historia", "informe", "alta",
];

const CONSONANTS: &[u8] = b"bcdfglmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn invent_word(rng: &mut rng::Rng) -> String {
    let syllables = rng.gen_range(3..=4);
    let mut w = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w
}

fn corrupt(token: &str, rng: &mut rng::Rng) -> Option<String> {
    if rng.gen_bool(0.5) {
        return None;
    }
    let mut bytes = token.as_bytes().to_vec();
    let pos = rng.gen_range(0..bytes.len());
    let old = bytes[pos];
    let mut new = old;
    while new == old {
        new = b'a' + rng.gen_range(0..26u8);
    }
    bytes[pos] = new;
    Some(String::from_utf8(bytes).expect("ascii"))
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut vocab_rng = rng::seeded(rng::derive(spec.seed, 1));
    let mut oracle_rng = rng::seeded(rng::derive(spec.seed, 2));
    let mut doc_rng = rng::seeded(rng::derive(spec.seed, 3));

    let filler: HashSet<&str> = FILLER.iter().copied().collect();
    let mut used: HashSet<String> = HashSet::new();
    let mut signatures = Vec::with_capacity(spec.n_labels);
    for _ in 0..spec.n_labels {
        let mut sig = Vec::with_capacity(spec.keywords_per_label);
        while sig.len() < spec.keywords_per_label {
            let w = invent_word(&mut vocab_rng);
            if !filler.contains(w.as_str()) && used.insert(w.clone()) {
                sig.push(w);
            }
        }
        signatures.push(sig);
    }

    let width = spec.n_labels.to_string().len().max(2);
    let entries = signatures
        .iter()
        .enumerate()
        .map(|(j, sig)| LabelEntry {
            code: format!("S{:0width$}", j + 1),
            description: Some(format!("synthetic condition {}", sig[0])),
        })
        .collect();
    let vocabulary = LabelVocabulary::from_entries(entries, false)?;

    // distinct active-dimension sets per label where the space allows it
    let mut combos: HashSet<Vec<usize>> = HashSet::new();
    let mut label_dims = Vec::with_capacity(spec.n_labels);
    for _ in 0..spec.n_labels {
        let mut dims;
        let mut tries = 0;
        loop {
            dims = rand::seq::index::sample(&mut oracle_rng, spec.oracle_dim, ORACLE_ACTIVE).into_vec();
            dims.sort_unstable();
            tries += 1;
            if combos.insert(dims.clone()) || tries > 1000 {
                break;
            }
        }
        label_dims.push(dims);
    }

    let weights: Vec<f64> = (1..=spec.n_labels)
        .map(|r| (r as f64).powf(-spec.zipf_exponent))
        .collect();
    let zipf = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;

    let max_labels = MAX_LABELS_PER_DOC.min(spec.n_labels);
    let mut documents = Vec::with_capacity(spec.n_documents);
    let mut oracle = DenseMatrix::zeros(spec.n_documents, spec.oracle_dim);
    for i in 0..spec.n_documents {
        let mut labels = vec![zipf.sample(&mut doc_rng)];
        while labels.len() < max_labels && doc_rng.gen_bool(spec.multi_label_rate) {
            let mut extra = zipf.sample(&mut doc_rng);
            let mut tries = 0;
            while labels.contains(&extra) && tries < 100 {
                extra = zipf.sample(&mut doc_rng);
                tries += 1;
            }
            if labels.contains(&extra) {
                break;
            }
            labels.push(extra);
        }
        labels.sort_unstable();

        let mut tokens: Vec<String> = Vec::new();
        for &l in &labels {
            for t in &signatures[l] {
                if spec.paraphrase_noise > 0.0 && doc_rng.gen_bool(spec.paraphrase_noise) {
                    if let Some(c) = corrupt(t, &mut doc_rng) {
                        tokens.push(c);
                    }
                } else {
                    tokens.push(t.clone());
                }
            }
            for &d in &label_dims[l] {
                let v = oracle.get(i, d);
                oracle.set(i, d, v + 1.0);
            }
        }
        let n_filler = doc_rng.gen_range(3..=8);
        for _ in 0..n_filler {
            let mut w = FILLER[doc_rng.gen_range(0..FILLER.len())].to_string();
            if doc_rng.gen_bool(0.1) {
                w = w.to_uppercase();
            }
            if doc_rng.gen_bool(0.1) {
                w.push(',');
            }
            tokens.push(w);
        }
        tokens.shuffle(&mut doc_rng);

        documents.push(Document {
            id: format!("doc{i:06}"),
            text: tokens.join(" "),
            codes: labels.iter().map(|&l| vocabulary.code(l).to_string()).collect(),
        });
    }

    Ok(SyntheticCorpus {
        dataset: LabeledDataset::new(documents, vocabulary)?,
        oracle,
        signatures,
    })
}

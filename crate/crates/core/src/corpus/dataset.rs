use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocabulary::LabelVocabulary;
use crate::error::{Error, Result};
use crate::matrix::LabelMatrix;

/// One free-text record with its gold codes (possibly none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub codes: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, codes: &[&str]) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            codes: codes.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn is_labeled(&self) -> bool {
        !self.codes.is_empty()
    }
}

/// What to do with a code absent from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownCodePolicy {
    /// Skip the whole record.
    #[default]
    RejectRecord,
    /// Keep the record without the offending code.
    DropCode,
    /// Abort loading.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub code: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectionReport {
    pub rejections: Vec<Rejection>,
    pub records_skipped: usize,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rejections.is_empty()
    }
}

/// Documents bound to a label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    documents: Vec<Document>,
    vocabulary: LabelVocabulary,
}

impl LabeledDataset {
    /// Validates id uniqueness and that every code belongs to the vocabulary.
    /// Codes are rewritten to the vocabulary's spelling and de-duplicated.
    pub fn new(documents: Vec<Document>, vocabulary: LabelVocabulary) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        let mut docs = Vec::with_capacity(documents.len());
        for (i, mut d) in documents.into_iter().enumerate() {
            if !seen.insert(d.id.clone()) {
                return Err(Error::DuplicateId(d.id));
            }
            let mut codes: Vec<String> = Vec::with_capacity(d.codes.len());
            for c in &d.codes {
                let pos = vocabulary.position(c).ok_or_else(|| Error::UnknownCode {
                    line: i + 1,
                    code: c.clone(),
                })?;
                let canonical = vocabulary.code(pos).to_string();
                if !codes.contains(&canonical) {
                    codes.push(canonical);
                }
            }
            d.codes = codes;
            docs.push(d);
        }
        Ok(Self {
            documents: docs,
            vocabulary,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Replaces document texts, keeping ids, codes and order.
    pub fn with_texts(&self, texts: Vec<String>) -> Self {
        assert_eq!(texts.len(), self.documents.len());
        let documents = self
            .documents
            .iter()
            .zip(texts)
            .map(|(d, text)| Document {
                id: d.id.clone(),
                text,
                codes: d.codes.clone(),
            })
            .collect();
        Self {
            documents,
            vocabulary: self.vocabulary.clone(),
        }
    }

    /// Subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    /// Indices of documents with at least one code.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.documents.len())
            .filter(|&i| self.documents[i].is_labeled())
            .collect()
    }

    pub fn label_matrix(&self) -> LabelMatrix {
        let mut m = LabelMatrix::zeros(self.documents.len(), self.vocabulary.len());
        for (i, d) in self.documents.iter().enumerate() {
            for c in &d.codes {
                let j = self.vocabulary.position(c).expect("validated at construction");
                m.set(i, j, true);
            }
        }
        m
    }

    /// Vocabulary labels with no positive document.
    pub fn degenerate_labels(&self) -> Vec<String> {
        let sums = self.label_matrix().column_sums();
        sums.iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(j, _)| self.vocabulary.code(j).to_string())
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for d in &self.documents {
            serde_json::to_writer(&mut writer, d)?;
            writer.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl<R: BufRead>(
        reader: R,
        vocabulary: LabelVocabulary,
        policy: UnknownCodePolicy,
    ) -> Result<(Self, RejectionReport)> {
        let mut report = RejectionReport::default();
        let mut docs = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io("<dataset>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if !seen.insert(doc.id.clone()) {
                return Err(Error::DuplicateId(doc.id));
            }
            let unknown: Vec<String> = doc
                .codes
                .iter()
                .filter(|c| !vocabulary.contains(c))
                .cloned()
                .collect();
            if !unknown.is_empty() {
                if policy == UnknownCodePolicy::Fail {
                    return Err(Error::UnknownCode {
                        line: line_no,
                        code: unknown[0].clone(),
                    });
                }
                for code in &unknown {
                    report.rejections.push(Rejection {
                        line: line_no,
                        id: doc.id.clone(),
                        code: code.clone(),
                    });
                }
                if policy == UnknownCodePolicy::RejectRecord {
                    report.records_skipped += 1;
                    continue;
                }
                doc.codes.retain(|c| vocabulary.contains(c));
            }
            docs.push(doc);
        }
        Ok((Self::new(docs, vocabulary)?, report))
    }
}

/// Reads a JSON Lines dataset (`{"id", "text", "codes"}` per line).
pub fn load_dataset(
    path: impl AsRef<Path>,
    vocabulary: LabelVocabulary,
    policy: UnknownCodePolicy,
) -> Result<(LabeledDataset, RejectionReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    LabeledDataset::read_jsonl(BufReader::new(file), vocabulary, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> LabelVocabulary {
        LabelVocabulary::shipped(true).unwrap()
    }

    fn read(text: &str, policy: UnknownCodePolicy) -> Result<(LabeledDataset, RejectionReport)> {
        LabeledDataset::read_jsonl(text.as_bytes(), vocab(), policy)
    }

    #[test]
    fn parses_a_record() {
        let (ds, rep) = read(
            r#"{"id":"d1","text":"ansiedad generalizada","codes":["F41.1"]}"#,
            UnknownCodePolicy::Fail,
        )
        .unwrap();
        assert!(rep.is_empty());
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.documents()[0].codes, vec!["F41.1"]);
    }

    #[test]
    fn empty_codes_are_accepted() {
        let (ds, _) = read(r#"{"id":"d1","text":"x","codes":[]}"#, UnknownCodePolicy::Fail).unwrap();
        assert!(!ds.documents()[0].is_labeled());
        assert!(ds.labeled_indices().is_empty());
    }

    #[test]
    fn unknown_code_is_reported_with_line() {
        let text = "{\"id\":\"a\",\"text\":\"x\",\"codes\":[\"F32\"]}\n{\"id\":\"b\",\"text\":\"y\",\"codes\":[\"F99.X\",\"F32\"]}\n";
        let (ds, rep) = read(text, UnknownCodePolicy::RejectRecord).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(rep.rejections[0].line, 2);
        assert_eq!(rep.rejections[0].code, "F99.X");
        assert_eq!(rep.records_skipped, 1);

        let (ds, rep) = read(text, UnknownCodePolicy::DropCode).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.documents()[1].codes, vec!["F32"]);
        assert_eq!(rep.records_skipped, 0);

        assert!(matches!(
            read(text, UnknownCodePolicy::Fail),
            Err(Error::UnknownCode { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_line_names_the_line() {
        let text = "{\"id\":\"a\",\"text\":\"x\",\"codes\":[]}\n{not json\n";
        assert!(matches!(read(text, UnknownCodePolicy::Fail), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let text = "{\"id\":\"a\",\"text\":\"x\",\"codes\":[]}\n{\"id\":\"a\",\"text\":\"y\",\"codes\":[]}\n";
        assert!(matches!(read(text, UnknownCodePolicy::Fail), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn label_matrix_sums_match_codes() {
        let v = LabelVocabulary::from_codes(&["A", "B", "C"]).unwrap();
        let ds = LabeledDataset::new(
            vec![
                Document::new("1", "t", &["A", "b"]),
                Document::new("2", "t", &["A"]),
                Document::new("3", "t", &[]),
            ],
            v,
        )
        .unwrap();
        let m = ds.label_matrix();
        assert_eq!(m.row_sums(), vec![2, 1, 0]);
        assert_eq!(m.column_sums(), vec![2, 1, 0]);
        assert_eq!(ds.degenerate_labels(), vec!["C"]);
    }
}

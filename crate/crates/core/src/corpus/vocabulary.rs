use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The code list shipped with the crate (`code,description`).
pub const SHIPPED_CODES_CSV: &str = include_str!("../../data/icd_codes.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub code: String,
    pub description: Option<String>,
}

/// Ordered label set. Positions are column indices of every label matrix
/// built against this vocabulary, so order is file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<LabelEntry>", into = "Vec<LabelEntry>")]
pub struct LabelVocabulary {
    entries: Vec<LabelEntry>,
    index: HashMap<String, usize>,
}

/// Canonical lookup key for a code: trimmed and upper-cased.
pub fn normalize_code(code: &str) -> String {
    code.trim().to_uppercase()
}

impl From<Vec<LabelEntry>> for LabelVocabulary {
    fn from(entries: Vec<LabelEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (normalize_code(&e.code), i))
            .collect();
        Self { entries, index }
    }
}

impl From<LabelVocabulary> for Vec<LabelEntry> {
    fn from(v: LabelVocabulary) -> Self {
        v.entries
    }
}

impl LabelVocabulary {
    /// Builds a vocabulary, failing on a duplicate code unless `dedupe_first`
    /// is set, in which case later occurrences are discarded.
    pub fn from_entries(entries: Vec<LabelEntry>, dedupe_first: bool) -> Result<Self> {
        let mut kept: Vec<LabelEntry> = Vec::with_capacity(entries.len());
        let mut index = HashMap::new();
        for mut e in entries {
            let key = normalize_code(&e.code);
            if key.is_empty() {
                return Err(Error::invalid("empty label code"));
            }
            e.code = e.code.trim().to_string();
            e.description = e
                .description
                .map(|d| d.trim().to_string())
                .filter(|d| !d.is_empty());
            if let Some(&pos) = index.get(&key) {
                let prev: &LabelEntry = &kept[pos];
                if prev.description == e.description || dedupe_first {
                    continue;
                }
                return Err(Error::DuplicateCode(e.code));
            }
            index.insert(key, kept.len());
            kept.push(e);
        }
        Ok(Self {
            entries: kept,
            index,
        })
    }

    /// Codes without descriptions, e.g. `["A1", "B2"]`.
    pub fn from_codes<S: AsRef<str>>(codes: &[S]) -> Result<Self> {
        Self::from_entries(
            codes
                .iter()
                .map(|c| LabelEntry {
                    code: c.as_ref().to_string(),
                    description: None,
                })
                .collect(),
            false,
        )
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, dedupe_first: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let code_col = col("code").ok_or_else(|| Error::Format("vocabulary CSV lacks a `code` column".into()))?;
        let desc_col = col("description");
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            entries.push(LabelEntry {
                code: rec.get(code_col).unwrap_or_default().to_string(),
                description: desc_col.and_then(|c| rec.get(c)).map(str::to_string),
            });
        }
        Self::from_entries(entries, dedupe_first)
    }

    /// The shipped appendix code list.
    pub fn shipped(dedupe_first: bool) -> Result<Self> {
        Self::from_csv_reader(SHIPPED_CODES_CSV.as_bytes(), dedupe_first)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["code", "description"])?;
        for e in &self.entries {
            w.write_record([e.code.as_str(), e.description.as_deref().unwrap_or("")])?;
        }
        w.flush().map_err(|e| Error::io("<vocabulary>", e))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn code(&self, position: usize) -> &str {
        &self.entries[position].code
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.index.get(&normalize_code(code)).copied()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.position(code).is_some()
    }

    pub fn has_descriptions(&self) -> bool {
        self.entries.iter().any(|e| e.description.is_some())
    }

    /// Codes whose description is missing.
    pub fn missing_descriptions(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.description.is_none())
            .map(|e| e.code.as_str())
            .collect()
    }
}

/// Reads a `code,description` CSV file.
pub fn load_label_vocabulary(path: impl AsRef<Path>, dedupe_first: bool) -> Result<LabelVocabulary> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    LabelVocabulary::from_csv_reader(file, dedupe_first)
}

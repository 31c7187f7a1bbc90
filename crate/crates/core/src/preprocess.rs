//! Text enrichment and normalization applied before vectorization.
//!
//! Steps run in a fixed order: code expansion, lowercasing, accent
//! stripping, character dropping, whitespace collapse, trim. The whole
//! pipeline is idempotent.

use std::borrow::Cow;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{LabelVocabulary, LabeledDataset};
use crate::error::{Error, Result};

/// Characters removed by default: anything that is not a letter, digit or
/// whitespace. A `.` between two digits is always kept.
pub const DEFAULT_DROP_CHARS: &str = r"[^\p{L}\p{N}\s]";

const CODE_PATTERN: &str = r"(?i)\b[a-z][0-9]+(?:\.[0-9]+)?\b";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub expand_codes: bool,
    pub lowercase: bool,
    pub strip_accents: bool,
    pub collapse_whitespace: bool,
    /// Regex character class of characters replaced by a space.
    pub drop_chars: String,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            expand_codes: true,
            lowercase: true,
            strip_accents: true,
            collapse_whitespace: true,
            drop_chars: DEFAULT_DROP_CHARS.to_string(),
        }
    }
}

/// A compiled preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    config: PreprocessConfig,
    drop: Regex,
    expander: Option<CodeExpander>,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig, vocabulary: Option<&LabelVocabulary>) -> Result<Self> {
        let drop = Regex::new(&config.drop_chars)
            .map_err(|e| Error::Config(format!("drop_chars `{}`: {e}", config.drop_chars)))?;
        let expander = match (config.expand_codes, vocabulary) {
            (true, Some(v)) => Some(CodeExpander::new(v)),
            (true, None) => return Err(Error::Config("expand_codes requires a label vocabulary".into())),
            (false, _) => None,
        };
        Ok(Self {
            config,
            drop,
            expander,
        })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn apply(&self, text: &str) -> String {
        let mut s: Cow<str> = Cow::Borrowed(text);
        if let Some(e) = &self.expander {
            s = Cow::Owned(e.expand(&s));
        }
        // lowercasing and decomposition can feed each other (e.g. U+0130)
        for _ in 0..4 {
            let before = s.clone();
            if self.config.lowercase {
                s = Cow::Owned(s.to_lowercase());
            }
            if self.config.strip_accents {
                s = Cow::Owned(strip_accents(&s));
            }
            if s == before {
                break;
            }
        }
        s = Cow::Owned(drop_chars(&self.drop, &s));
        if self.config.collapse_whitespace {
            s = Cow::Owned(s.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        s.trim().to_string()
    }
}

/// NFKD decomposition with combining marks removed.
pub fn strip_accents(text: &str) -> String {
    text.nfkd().filter(|c| !is_combining_mark(*c)).collect()
}

fn drop_chars(class: &Regex, text: &str) -> String {
    class
        .replace_all(text, |caps: &Captures| {
            let m = caps.get(0).unwrap();
            let digit_before = text[..m.start()].chars().next_back().is_some_and(|c| c.is_ascii_digit());
            let digit_after = text[m.end()..].chars().next().is_some_and(|c| c.is_ascii_digit());
            if m.as_str() == "." && digit_before && digit_after {
                ".".to_string()
            } else {
                " ".to_string()
            }
        })
        .into_owned()
}

/// Case- and accent-insensitive alphanumeric skeleton used to recognise an
/// already expanded code.
fn skeleton(text: &str) -> String {
    strip_accents(&text.to_lowercase())
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect()
}

#[derive(Debug, Clone)]
struct CodeExpander {
    pattern: Regex,
    vocabulary: LabelVocabulary,
}

impl CodeExpander {
    fn new(vocabulary: &LabelVocabulary) -> Self {
        Self {
            pattern: Regex::new(CODE_PATTERN).expect("static pattern"),
            vocabulary: vocabulary.clone(),
        }
    }

    fn description(&self, code: &str) -> Option<&str> {
        let pos = self.vocabulary.position(code)?;
        self.vocabulary.entries()[pos].description.as_deref()
    }

    fn expand(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for m in self.pattern.find_iter(text) {
            out.push_str(&text[last..m.end()]);
            last = m.end();
            let Some(desc) = self.description(m.as_str()) else {
                continue;
            };
            let want = skeleton(desc);
            if skeleton(&text[m.end()..]).starts_with(&want) {
                continue;
            }
            out.push(' ');
            out.push_str(desc);
        }
        out.push_str(&text[last..]);
        out
    }
}

/// Replaces every in-vocabulary code token with `code description`.
pub fn expand_icd_abbreviations(text: &str, vocabulary: &LabelVocabulary) -> String {
    CodeExpander::new(vocabulary).expand(text)
}

/// Runs the configured pipeline on one string. Code expansion is skipped
/// here since no vocabulary is given; use [`Preprocessor`] for that.
pub fn normalize_text(text: &str, config: &PreprocessConfig) -> Result<String> {
    let config = PreprocessConfig {
        expand_codes: false,
        ..config.clone()
    };
    Ok(Preprocessor::new(config, None)?.apply(text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmptyTextEntry {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EmptyTextReport {
    pub entries: Vec<EmptyTextEntry>,
}

impl EmptyTextReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "reason"])?;
        for e in &self.entries {
            w.write_record([&e.id, &e.reason])?;
        }
        w.flush().map_err(|e| Error::io("<empty-text report>", e))?;
        Ok(())
    }
}

pub fn preprocess_corpus(
    dataset: &LabeledDataset,
    config: &PreprocessConfig,
) -> Result<(LabeledDataset, EmptyTextReport)> {
    let pre = Preprocessor::new(config.clone(), Some(dataset.vocabulary()))?;
    let mut report = EmptyTextReport::default();
    let texts = dataset
        .documents()
        .iter()
        .map(|d| {
            let t = pre.apply(&d.text);
            if t.is_empty() {
                report.entries.push(EmptyTextEntry {
                    id: d.id.clone(),
                    reason: if d.text.trim().is_empty() {
                        "empty_input".into()
                    } else {
                        "empty_after_normalization".into()
                    },
                });
            }
            t
        })
        .collect();
    Ok((dataset.with_texts(texts), report))
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Per-label positive counts and the cumulative coverage curve over labels
/// ranked by descending count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    /// Codes in vocabulary order.
    pub codes: Vec<String>,
    /// Positive counts in vocabulary order.
    pub counts: Vec<usize>,
    /// Vocabulary positions sorted by descending count; ties keep vocabulary order.
    pub ranking: Vec<usize>,
    /// `coverage[k]` is the share of all positives held by the top `k + 1` labels.
    pub coverage: Vec<f64>,
}

impl FrequencyProfile {
    pub fn from_counts(codes: Vec<String>, counts: Vec<usize>) -> Self {
        let mut ranking: Vec<usize> = (0..counts.len()).collect();
        ranking.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let total: usize = counts.iter().sum();
        let mut acc = 0usize;
        let coverage = ranking
            .iter()
            .map(|&j| {
                acc += counts[j];
                if total == 0 {
                    1.0
                } else {
                    acc as f64 / total as f64
                }
            })
            .collect();
        Self {
            codes,
            counts,
            ranking,
            coverage,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Smallest number of top-ranked labels whose share reaches `fraction`.
    pub fn labels_for_coverage(&self, fraction: f64) -> usize {
        self.coverage
            .iter()
            .position(|&c| c >= fraction)
            .map_or(self.coverage.len(), |p| p + 1)
    }

    /// `code,count,cumulative_fraction` in rank order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["code", "count", "cumulative_fraction"])?;
        for (&j, cov) in self.ranking.iter().zip(&self.coverage) {
            w.write_record([
                self.codes[j].clone(),
                self.counts[j].to_string(),
                format!("{cov}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<frequency report>", e))?;
        Ok(())
    }
}

pub fn frequency_profile(dataset: &LabeledDataset) -> FrequencyProfile {
    let counts = dataset.label_matrix().column_sums();
    let codes = dataset
        .vocabulary()
        .entries()
        .iter()
        .map(|e| e.code.clone())
        .collect();
    FrequencyProfile::from_counts(codes, counts)
}

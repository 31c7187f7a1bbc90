use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::RunReport;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// The four headline numbers of one partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Headline {
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
}

impl From<&MetricsReport> for Headline {
    fn from(m: &MetricsReport) -> Self {
        Self {
            f1_micro: m.f1_micro,
            f1_macro: m.f1_macro,
            precision_micro: m.precision_micro,
            recall_micro: m.recall_micro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub validation: Headline,
    pub test: Headline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub class_csv: PathBuf,
    pub frequency_csv: PathBuf,
    pub table: PathBuf,
}

/// One results row: representation, model, validation F1_micro, then test
/// F1_micro, F1_macro, precision_micro and recall_micro.
pub fn results_table(r: &RunReport) -> String {
    let header = [
        "Text Representation",
        "Classification Model",
        "Validation F1_micro",
        "Test F1_micro",
        "Test F1_macro",
        "Test Precision_micro",
        "Test Recall_micro",
    ];
    let cells = [
        r.representation.clone(),
        r.classifier.clone(),
        format!("{:.6}", r.validation.f1_micro),
        format!("{:.6}", r.test.f1_micro),
        format!("{:.6}", r.test.f1_macro),
        format!("{:.6}", r.test.precision_micro),
        format!("{:.6}", r.test.recall_micro),
    ];
    let widths: Vec<usize> = header.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
    let line = |items: &[&str]| -> String {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let rule: String = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
    let cell_refs: Vec<&str> = cells.iter().map(String::as_str).collect();
    format!("{}\n{}\n{}\n", line(&header), rule, line(&cell_refs))
}

/// Writes the report files of a finished run into its directory.
pub fn report(run_dir: &Path) -> Result<ReportFiles> {
    let run = RunReport::load(run_dir)?;
    let files = ReportFiles {
        summary: run_dir.join("summary.json"),
        class_csv: run_dir.join("class_metrics.csv"),
        frequency_csv: run_dir.join("frequency_profile.csv"),
        table: run_dir.join("results_table.txt"),
    };
    let summary = Summary {
        validation: (&run.validation).into(),
        test: (&run.test).into(),
    };
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p, e)
    };
    std::fs::write(&files.summary, serde_json::to_string_pretty(&summary)?).map_err(io(&files.summary))?;
    let f = std::fs::File::create(&files.class_csv).map_err(io(&files.class_csv))?;
    run.test.write_class_csv(std::io::BufWriter::new(f))?;
    let f = std::fs::File::create(&files.frequency_csv).map_err(io(&files.frequency_csv))?;
    run.label_profile.write_csv(std::io::BufWriter::new(f))?;
    std::fs::write(&files.table, results_table(&run)).map_err(io(&files.table))?;
    Ok(files)
}

//! Long-format score files: one `id,code,score` row per document and label.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::LabelVocabulary;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ScoreMatrix};

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_predictions(path: &Path, ids: &[&str], vocabulary: &LabelVocabulary, scores: &ScoreMatrix) -> Result<()> {
    if ids.len() != scores.rows() || vocabulary.len() != scores.cols() {
        return Err(Error::DimensionMismatch {
            expected: ids.len() * vocabulary.len(),
            actual: scores.rows() * scores.cols(),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["id", "code", "score"]).map_err(|e| csv_error(path, e))?;
    for (i, id) in ids.iter().enumerate() {
        for l in 0..vocabulary.len() {
            let score = scores.get(i, l).to_string();
            w.write_record([*id, vocabulary.code(l), score.as_str()]).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Distinct document ids in first-seen order.
pub fn prediction_ids(path: &Path) -> Result<Vec<String>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let id = rec.get(0).unwrap_or_default();
        if seen.insert(id.to_string()) {
            out.push(id.to_string());
        }
    }
    Ok(out)
}

/// Scores for `ids` in the given order. Pairs absent from the file score 0.
pub fn read_predictions(path: &Path, ids: &[&str], vocabulary: &LabelVocabulary) -> Result<ScoreMatrix> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = rd.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "code", "score"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header id,code,score, found {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let row_of: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut scores = DenseMatrix::zeros(ids.len(), vocabulary.len());
    let mut filled = vec![false; ids.len() * vocabulary.len()];
    let mut extra = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let Some(&row) = row_of.get(&rec[0]) else {
            if !extra.contains(&rec[0].to_string()) {
                extra.push(rec[0].to_string());
            }
            continue;
        };
        let col = vocabulary.position(&rec[1]).ok_or_else(|| Error::UnknownCode {
            line,
            code: rec[1].to_string(),
        })?;
        let score: f64 = rec[2].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("score {:?} is not a number", &rec[2]),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Parse {
                line,
                message: format!("score {score} is outside [0, 1]"),
            });
        }
        let slot = row * vocabulary.len() + col;
        if filled[slot] {
            return Err(Error::Parse {
                line,
                message: format!("duplicate score for {} / {}", &rec[0], &rec[1]),
            });
        }
        filled[slot] = true;
        scores.set(row, col, score);
    }
    if !extra.is_empty() {
        return Err(Error::Alignment {
            missing: Vec::new(),
            extra,
        });
    }
    ScoreMatrix::new(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let vocab = LabelVocabulary::from_codes(&["A1", "B2", "C3"]).unwrap();
        let s = ScoreMatrix::new(DenseMatrix::from_rows(&[vec![0.1, 1.0 / 3.0, 0.0], vec![1.0, 2e-17, 0.5]]).unwrap()).unwrap();
        write_predictions(&path, &["x", "y"], &vocab, &s).unwrap();
        assert_eq!(read_predictions(&path, &["x", "y"], &vocab).unwrap(), s);
        assert_eq!(prediction_ids(&path).unwrap(), vec!["x", "y"]);
        let flipped = read_predictions(&path, &["y", "x"], &vocab).unwrap();
        assert_eq!(flipped.get(0, 2), 0.5);
    }

    #[test]
    fn bad_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let vocab = LabelVocabulary::from_codes(&["A1"]).unwrap();
        let check = |body: &str| {
            std::fs::write(&path, format!("id,code,score\n{body}")).unwrap();
            read_predictions(&path, &["x"], &vocab).unwrap_err()
        };
        assert!(matches!(check("x,ZZ,0.1\n"), Error::UnknownCode { line: 2, .. }));
        assert!(matches!(check("x,A1,1.5\n"), Error::Parse { line: 2, .. }));
        assert!(matches!(check("x,A1,0.1\nx,A1,0.2\n"), Error::Parse { line: 3, .. }));
        assert!(matches!(check("q,A1,0.1\n"), Error::Alignment { .. }));
        std::fs::write(&path, "id,label,score\n").unwrap();
        assert!(matches!(read_predictions(&path, &["x"], &vocab), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_pairs_score_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let vocab = LabelVocabulary::from_codes(&["A1", "B2"]).unwrap();
        std::fs::write(&path, "id,code,score\nx,B2,0.7\n").unwrap();
        let s = read_predictions(&path, &["x", "y"], &vocab).unwrap();
        assert_eq!(s.as_dense().as_slice(), &[0.0, 0.7, 0.0, 0.0]);
    }
}

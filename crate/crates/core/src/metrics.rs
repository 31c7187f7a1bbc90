//! Multi-label evaluation: per-label confusion counts, micro and macro
//! precision / recall / F1, and the per-class report.
//!
//! Every document-code pair counts as one binary decision. Any ratio with a
//! zero denominator is defined as 0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelVocabulary;
use crate::error::{Error, Result};
use crate::matrix::LabelMatrix;

/// Tag recorded in every report describing how 0/0 ratios were resolved.
pub const ZERO_DIVISION_POLICY: &str = "zero";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl LabelCounts {
    pub fn n_labels(&self) -> usize {
        self.tp.len()
    }

    pub fn support(&self, l: usize) -> u64 {
        self.tp[l] + self.fn_[l]
    }

    pub fn predicted(&self, l: usize) -> u64 {
        self.tp[l] + self.fp[l]
    }
}

pub fn confusion_counts(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<LabelCounts> {
    if y_true.rows() != y_pred.rows() {
        return Err(Error::DimensionMismatch {
            expected: y_true.rows(),
            actual: y_pred.rows(),
        });
    }
    if y_true.cols() != y_pred.cols() {
        return Err(Error::DimensionMismatch {
            expected: y_true.cols(),
            actual: y_pred.cols(),
        });
    }
    let l = y_true.cols();
    let mut c = LabelCounts {
        tp: vec![0; l],
        fp: vec![0; l],
        fn_: vec![0; l],
    };
    for i in 0..y_true.rows() {
        for (j, (&t, &p)) in y_true.row(i).iter().zip(y_pred.row(i)).enumerate() {
            match (t != 0, p != 0) {
                (true, true) => c.tp[j] += 1,
                (false, true) => c.fp[j] += 1,
                (true, false) => c.fn_[j] += 1,
                (false, false) => {}
            }
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

/// `(precision, recall, f1)` pooled over all labels.
pub fn micro_scores(c: &LabelCounts) -> (f64, f64, f64) {
    let tp: u64 = c.tp.iter().sum();
    let fp: u64 = c.fp.iter().sum();
    let fn_: u64 = c.fn_.iter().sum();
    let p = ratio(tp as f64, (tp + fp) as f64);
    let r = ratio(tp as f64, (tp + fn_) as f64);
    (p, r, f1(p, r))
}

pub fn label_scores(c: &LabelCounts, l: usize) -> (f64, f64, f64) {
    let p = ratio(c.tp[l] as f64, c.predicted(l) as f64);
    let r = ratio(c.tp[l] as f64, c.support(l) as f64);
    (p, r, f1(p, r))
}

/// Which labels the macro averages run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroScope {
    /// Every vocabulary label, including those without gold positives.
    #[default]
    All,
    /// Only labels with at least one gold positive.
    Present,
}

/// `(precision, recall, f1)` averaged per label.
pub fn macro_scores(c: &LabelCounts, scope: MacroScope) -> (f64, f64, f64) {
    let labels: Vec<usize> = (0..c.n_labels())
        .filter(|&l| scope == MacroScope::All || c.support(l) > 0)
        .collect();
    if labels.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = labels.len() as f64;
    let mut acc = (0.0, 0.0, 0.0);
    for l in labels {
        let (p, r, f) = label_scores(c, l);
        acc.0 += p;
        acc.1 += r;
        acc.2 += f;
    }
    (acc.0 / n, acc.1 / n, acc.2 / n)
}

pub fn macro_f1(c: &LabelCounts) -> f64 {
    macro_scores(c, MacroScope::All).2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub code: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when precision or recall was 0/0 for this label.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub f1_micro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub macro_scope: MacroScope,
    pub zero_division: String,
    pub classes: Vec<ClassRow>,
}

impl MetricsReport {
    pub fn from_counts(counts: &LabelCounts, vocabulary: &LabelVocabulary, scope: MacroScope) -> Result<Self> {
        if counts.n_labels() != vocabulary.len() {
            return Err(Error::DimensionMismatch {
                expected: vocabulary.len(),
                actual: counts.n_labels(),
            });
        }
        let (pm, rm, fm) = micro_scores(counts);
        let (pa, ra, fa) = macro_scores(counts, scope);
        let classes = (0..counts.n_labels())
            .map(|l| {
                let (p, r, f) = label_scores(counts, l);
                ClassRow {
                    code: vocabulary.code(l).to_string(),
                    precision: p,
                    recall: r,
                    f1: f,
                    support: counts.support(l),
                    zero_division: counts.predicted(l) == 0 || counts.support(l) == 0,
                }
            })
            .collect();
        Ok(Self {
            precision_micro: pm,
            recall_micro: rm,
            f1_micro: fm,
            precision_macro: pa,
            recall_macro: ra,
            f1_macro: fa,
            macro_scope: scope,
            zero_division: ZERO_DIVISION_POLICY.to_string(),
            classes,
        })
    }

    /// Per-class rows, most supported first (ties keep vocabulary order).
    pub fn classes_by_support(&self) -> Vec<&ClassRow> {
        let mut rows: Vec<&ClassRow> = self.classes.iter().collect();
        rows.sort_by(|a, b| b.support.cmp(&a.support));
        rows
    }

    /// `code,precision,recall,f1,support,zero_division`, sorted by support
    /// descending.
    pub fn write_class_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["code", "precision", "recall", "f1", "support", "zero_division"])?;
        for row in self.classes_by_support() {
            w.write_record([
                row.code.clone(),
                row.precision.to_string(),
                row.recall.to_string(),
                row.f1.to_string(),
                row.support.to_string(),
                row.zero_division.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<class report>", e))
    }

    pub fn summary(&self) -> MetricsSummary {
        MetricsSummary {
            precision_micro: self.precision_micro,
            recall_micro: self.recall_micro,
            f1_micro: self.f1_micro,
            precision_macro: self.precision_macro,
            recall_macro: self.recall_macro,
            f1_macro: self.f1_macro,
            macro_scope: self.macro_scope,
            zero_division: self.zero_division.clone(),
        }
    }
}

/// Aggregates without the per-class rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub f1_micro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub macro_scope: MacroScope,
    pub zero_division: String,
}

pub fn evaluate(
    y_true: &LabelMatrix,
    y_pred: &LabelMatrix,
    vocabulary: &LabelVocabulary,
    scope: MacroScope,
) -> Result<MetricsReport> {
    MetricsReport::from_counts(&confusion_counts(y_true, y_pred)?, vocabulary, scope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lm(rows: &[Vec<u8>]) -> LabelMatrix {
        LabelMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn swap_case_counts() {
        let c = confusion_counts(&lm(&[vec![1, 0]]), &lm(&[vec![0, 1]])).unwrap();
        assert_eq!(c.fn_, vec![1, 0]);
        assert_eq!(c.fp, vec![0, 1]);
        assert_eq!(c.tp, vec![0, 0]);
    }

    #[test]
    fn shape_mismatch_errors() {
        assert!(confusion_counts(&lm(&[vec![1, 0]]), &lm(&[vec![0]])).is_err());
        assert!(confusion_counts(&lm(&[vec![1]]), &lm(&[vec![0], vec![1]])).is_err());
    }

    #[test]
    fn hand_computed_micro() {
        let c = LabelCounts {
            tp: vec![1, 1],
            fp: vec![1, 0],
            fn_: vec![0, 1],
        };
        let (p, r, f) = micro_scores(&c);
        for v in [p, r, f] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_counts_score_zero() {
        let c = LabelCounts {
            tp: vec![0; 3],
            fp: vec![0; 3],
            fn_: vec![0; 3],
        };
        assert_eq!(micro_scores(&c), (0.0, 0.0, 0.0));
        assert_eq!(macro_f1(&c), 0.0);
    }

    #[test]
    fn macro_is_mean_over_all_labels() {
        // label 0 perfect, label 1 missed, label 2 absent everywhere
        let c = LabelCounts {
            tp: vec![3, 0, 0],
            fp: vec![0, 0, 0],
            fn_: vec![0, 2, 0],
        };
        assert!((macro_f1(&c) - 1.0 / 3.0).abs() < 1e-15);
        assert!((macro_scores(&c, MacroScope::Present).2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn report_csv_is_sorted_by_support() {
        let vocab = LabelVocabulary::from_codes(&["A1", "B2"]).unwrap();
        let y = lm(&[vec![0, 1], vec![1, 1], vec![0, 1]]);
        let r = evaluate(&y, &y, &vocab, MacroScope::All).unwrap();
        assert_eq!(r.zero_division, "zero");
        let mut buf = Vec::new();
        r.write_class_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "code,precision,recall,f1,support,zero_division");
        assert_eq!(lines[1], "B2,1,1,1,3,false");
        assert_eq!(lines[2], "A1,1,1,1,1,false");
    }

    fn pair() -> impl Strategy<Value = (LabelMatrix, LabelMatrix)> {
        (1usize..30, 1usize..12).prop_flat_map(|(n, l)| {
            let m = || proptest::collection::vec(proptest::collection::vec(0u8..2, l), n);
            (m(), m()).prop_map(|(a, b)| (LabelMatrix::from_rows(&a).unwrap(), LabelMatrix::from_rows(&b).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn values_are_bounded_and_consistent((t, p) in pair()) {
            let c = confusion_counts(&t, &p).unwrap();
            for l in 0..c.n_labels() {
                prop_assert_eq!(c.support(l), (0..t.rows()).filter(|&i| t.get(i, l)).count() as u64);
            }
            let (pm, rm, fm) = micro_scores(&c);
            let (pa, ra, fa) = macro_scores(&c, MacroScope::All);
            for v in [pm, rm, fm, pa, ra, fa] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(fm >= pm.min(rm) - 1e-15 && fm <= pm.max(rm) + 1e-15);
        }

        #[test]
        fn label_permutation_invariance((t, p) in pair(), shift in 0usize..12) {
            let l = t.cols();
            let perm = |m: &LabelMatrix| {
                let rows: Vec<Vec<u8>> = (0..m.rows())
                    .map(|i| (0..l).map(|j| m.row(i)[(j + shift) % l]).collect())
                    .collect();
                LabelMatrix::from_rows(&rows).unwrap()
            };
            let a = confusion_counts(&t, &p).unwrap();
            let b = confusion_counts(&perm(&t), &perm(&p)).unwrap();
            prop_assert_eq!(micro_scores(&a), micro_scores(&b));
            prop_assert!((macro_f1(&a) - macro_f1(&b)).abs() < 1e-12);
        }

        #[test]
        fn empty_label_changes_macro_not_micro((t, p) in pair()) {
            let widen = |m: &LabelMatrix| {
                let rows: Vec<Vec<u8>> = (0..m.rows()).map(|i| {
                    let mut r = m.row(i).to_vec();
                    r.push(0);
                    r
                }).collect();
                LabelMatrix::from_rows(&rows).unwrap()
            };
            let a = confusion_counts(&t, &p).unwrap();
            let b = confusion_counts(&widen(&t), &widen(&p)).unwrap();
            prop_assert_eq!(micro_scores(&a), micro_scores(&b));
            let fa = macro_f1(&a);
            let fb = macro_f1(&b);
            prop_assert!((fb - fa * a.n_labels() as f64 / b.n_labels() as f64).abs() < 1e-12);
        }
    }
}

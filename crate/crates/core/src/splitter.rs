//! Multi-label iterative stratification into train, validation and test.
//!
//! Labels are visited rarest first. Each unassigned positive of the current
//! label goes to the partition that still wants the most positives of that
//! label, with ties broken by remaining overall capacity and then by the
//! seeded generator. Partitions that have reached their size are skipped
//! while another one still has room.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::LabelMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::Format(format!("unknown partition `{other}`"))),
        }
    }
}

/// Train, validation and test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios([0.70, 0.15, 0.15])
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("split ratios must be positive"));
        }
        let s: f64 = self.0.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {s}, not 1")));
        }
        Ok(())
    }
}

/// Problems the splitter worked around.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitWarnings {
    /// Labels with a single positive; the positive is kept in train.
    pub single_positive_labels: Vec<String>,
    /// `(label, document id)` moved into train so that a label with two or
    /// three positives is represented there.
    pub moved_to_train: Vec<(String, String)>,
}

impl SplitWarnings {
    pub fn is_empty(&self) -> bool {
        self.single_positive_labels.is_empty() && self.moved_to_train.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ids: Vec<String>,
    pub partitions: Vec<Partition>,
    pub ratios: SplitRatios,
    /// `None` when read back from a CSV file.
    pub seed: Option<u64>,
    pub warnings: SplitWarnings,
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Row positions assigned to `p`, ascending.
    pub fn rows(&self, p: Partition) -> Vec<usize> {
        (0..self.partitions.len()).filter(|&i| self.partitions[i] == p).collect()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut s = [0; 3];
        for p in &self.partitions {
            s[p.index()] += 1;
        }
        s
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "partition"])?;
        for (id, p) in self.ids.iter().zip(&self.partitions) {
            w.write_record([id.as_str(), p.as_str()])?;
        }
        w.flush().map_err(|e| Error::io("<split>", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "partition" {
            return Err(Error::Format("split file must have header `id,partition`".into()));
        }
        let mut ids = Vec::new();
        let mut partitions = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or("").to_string();
            let p: Partition = rec.get(1).unwrap_or("").parse().map_err(|e: Error| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
            partitions.push(p);
        }
        let n = ids.len().max(1) as f64;
        let mut counts = [0.0; 3];
        for p in &partitions {
            counts[p.index()] += 1.0;
        }
        Ok(Self {
            ids,
            partitions,
            ratios: SplitRatios(counts.map(|c| c / n)),
            seed: None,
            warnings: SplitWarnings::default(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }

    /// Dataset row indices per partition. Every id in the split must exist
    /// in the dataset; dataset documents absent from the split are left out.
    pub fn dataset_rows(&self, dataset: &LabeledDataset) -> Result<[Vec<usize>; 3]> {
        let index: HashMap<&str, usize> = dataset
            .documents()
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.as_str(), i))
            .collect();
        let extra: Vec<String> = self.ids.iter().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
        if !extra.is_empty() {
            return Err(Error::Alignment {
                missing: Vec::new(),
                extra,
            });
        }
        let mut out: [Vec<usize>; 3] = Default::default();
        for (id, p) in self.ids.iter().zip(&self.partitions) {
            out[p.index()].push(index[id.as_str()]);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        Ok(out)
    }
}

/// Picks uniformly among the maximizers of `key`.
fn argmax_random<K: PartialOrd + Copy>(
    candidates: impl Iterator<Item = (usize, K)>,
    r: &mut rng::Rng,
) -> Option<usize> {
    let mut best: Vec<usize> = Vec::new();
    let mut best_key: Option<K> = None;
    for (i, k) in candidates {
        match best_key {
            Some(b) if k < b => {}
            Some(b) if k == b => best.push(i),
            _ => {
                best_key = Some(k);
                best.clear();
                best.push(i);
            }
        }
    }
    best.choose(r).copied()
}

const EPS: f64 = 1e-9;

/// Splits the rows of `labels`. Row ids in the result are the row indices.
pub fn iterative_stratified_split(labels: &LabelMatrix, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    let codes: Vec<String> = (0..labels.cols()).map(|j| j.to_string()).collect();
    let ids: Vec<String> = (0..labels.rows()).map(|i| i.to_string()).collect();
    split_with_names(labels, &ids, &codes, ratios, seed)
}

/// Splits the labeled documents of `dataset`. Unlabeled documents are not
/// part of any partition.
pub fn split_dataset(dataset: &LabeledDataset, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    let labeled = dataset.labeled_indices();
    let sub = dataset.subset(&labeled);
    let ids: Vec<String> = sub.documents().iter().map(|d| d.id.clone()).collect();
    let codes: Vec<String> = sub.vocabulary().entries().iter().map(|e| e.code.clone()).collect();
    split_with_names(&sub.label_matrix(), &ids, &codes, ratios, seed)
}

fn split_with_names(
    labels: &LabelMatrix,
    ids: &[String],
    codes: &[String],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    let n = labels.rows();
    if n == 0 {
        return Err(Error::invalid("cannot split an empty document set"));
    }
    let n_labels = labels.cols();
    let r = ratios.0;
    let mut rand = rng::seeded(seed);

    let doc_labels: Vec<Vec<usize>> = (0..n).map(|i| labels.positives(i)).collect();
    let mut label_docs: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (i, ls) in doc_labels.iter().enumerate() {
        for &l in ls {
            label_docs[l].push(i);
        }
    }
    let totals: Vec<usize> = label_docs.iter().map(Vec::len).collect();

    let mut capacity: [f64; 3] = [0, 1, 2].map(|j| r[j] * n as f64);
    let mut demand: Vec<[f64; 3]> = totals.iter().map(|&t| [0, 1, 2].map(|j| r[j] * t as f64)).collect();
    let mut remaining = totals.clone();
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut warnings = SplitWarnings::default();

    let place = |doc: usize,
                     p: usize,
                     assigned: &mut Vec<Option<usize>>,
                     capacity: &mut [f64; 3],
                     demand: &mut Vec<[f64; 3]>,
                     remaining: &mut Vec<usize>| {
        assigned[doc] = Some(p);
        capacity[p] -= 1.0;
        for &l in &doc_labels[doc] {
            demand[l][p] -= 1.0;
            remaining[l] -= 1;
        }
    };

    loop {
        let next = argmax_random(
            (0..n_labels)
                .filter(|&l| remaining[l] > 0)
                .map(|l| (l, std::cmp::Reverse(remaining[l]))),
            &mut rand,
        );
        let Some(l) = next else { break };
        let mut docs: Vec<usize> = label_docs[l].iter().copied().filter(|&d| assigned[d].is_none()).collect();
        docs.shuffle(&mut rand);
        for d in docs {
            let open: Vec<usize> = (0..3).filter(|&j| capacity[j] > EPS).collect();
            let open = if open.is_empty() { vec![0, 1, 2] } else { open };
            let p = if totals[l] == 1 && open.contains(&0) {
                0
            } else {
                argmax_random(
                    open.iter().map(|&j| (j, (Ordered(demand[l][j]), Ordered(capacity[j])))),
                    &mut rand,
                )
                .expect("at least one partition")
            };
            place(d, p, &mut assigned, &mut capacity, &mut demand, &mut remaining);
        }
    }

    let mut unlabeled: Vec<usize> = (0..n).filter(|&i| assigned[i].is_none()).collect();
    unlabeled.shuffle(&mut rand);
    for d in unlabeled {
        let p = argmax_random((0..3).map(|j| (j, Ordered(capacity[j]))), &mut rand).expect("three partitions");
        place(d, p, &mut assigned, &mut capacity, &mut demand, &mut remaining);
    }

    let mut partitions: Vec<usize> = assigned.into_iter().map(|a| a.expect("every row placed")).collect();
    for l in 0..n_labels {
        if totals[l] == 1 {
            warnings.single_positive_labels.push(codes[l].clone());
        }
        if (2..=3).contains(&totals[l]) && label_docs[l].iter().all(|&d| partitions[d] != 0) {
            // move the positive from whichever held-out partition is most over its target
            let mut counts = [0usize; 3];
            for &d in &label_docs[l] {
                counts[partitions[d]] += 1;
            }
            let target = [0, 1, 2].map(|j| r[j] * totals[l] as f64);
            let from = (1..3)
                .filter(|&j| counts[j] > 0)
                .max_by(|&a, &b| (counts[a] as f64 - target[a]).total_cmp(&(counts[b] as f64 - target[b])))
                .expect("some positive is held out");
            let d = *label_docs[l]
                .iter()
                .find(|&&d| partitions[d] == from)
                .expect("partition holds a positive");
            partitions[d] = 0;
            warnings.moved_to_train.push((codes[l].clone(), ids[d].clone()));
        }
    }

    Ok(SplitAssignment {
        ids: ids.to_vec(),
        partitions: partitions.into_iter().map(|p| Partition::ALL[p]).collect(),
        ratios,
        seed: Some(seed),
        warnings,
    })
}

/// Total order wrapper for finite floats.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ordered(f64);

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.0.total_cmp(&other.0))
    }
}

/// Labels (by column) and partitions whose positive count misses the
/// stratification bound: within one sample of `ratio · positives`, or within
/// 10% of it when the label has at least 20 positives. Labels with fewer than
/// two positives are not checked.
pub fn stratification_violations(labels: &LabelMatrix, split: &SplitAssignment) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    for l in 0..labels.cols() {
        let mut counts = [0usize; 3];
        for i in 0..labels.rows() {
            if labels.get(i, l) {
                counts[split.partitions[i].index()] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        if total < 2 {
            continue;
        }
        for p in Partition::ALL {
            let target = split.ratios.0[p.index()] * total as f64;
            let dev = (counts[p.index()] as f64 - target).abs();
            let ok = dev <= 1.0 + EPS || (total >= 20 && dev <= 0.1 * target + EPS);
            if !ok {
                out.push(BoundViolation {
                    label: l,
                    partition: p,
                    count: counts[p.index()],
                    target,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub label: usize,
    pub partition: Partition,
    pub count: usize,
    pub target: f64,
}

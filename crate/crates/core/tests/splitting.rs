use icd_coder::corpus::{generate_synthetic_corpus, SyntheticSpec};
use icd_coder::splitter::{split_dataset, stratification_violations, Partition, SplitRatios};

#[test]
fn zipf_corpus_meets_partition_bounds() {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::default()).unwrap();
    let ds = &corpus.dataset;
    let labels = ds.subset(&ds.labeled_indices()).label_matrix();
    let split = split_dataset(ds, SplitRatios::default(), 11).unwrap();
    let violations = stratification_violations(&labels, &split);
    assert!(violations.is_empty(), "{violations:?}");
    assert_eq!(split, split_dataset(ds, SplitRatios::default(), 11).unwrap());
}

#[test]
fn dataset_rows_partition_the_labeled_documents() {
    let spec = SyntheticSpec { n_documents: 500, ..SyntheticSpec::default() };
    let ds = generate_synthetic_corpus(&spec).unwrap().dataset;
    let split = split_dataset(&ds, SplitRatios::default(), 1).unwrap();
    let rows = split.dataset_rows(&ds).unwrap();
    let mut all: Vec<usize> = rows.concat();
    all.sort_unstable();
    assert_eq!(all, ds.labeled_indices());
    assert_eq!(rows[Partition::Train.index()].len(), split.sizes()[0]);
}

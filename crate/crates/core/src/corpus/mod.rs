//! Dataset model, label vocabulary, file I/O, frequency profiling and the
//! synthetic corpus generator.

mod dataset;
mod profile;
mod synthetic;
mod vocabulary;

pub use dataset::{load_dataset, Document, LabeledDataset, Rejection, RejectionReport, UnknownCodePolicy};
pub use profile::{frequency_profile, FrequencyProfile};
pub use synthetic::{generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec};
pub use vocabulary::{load_label_vocabulary, normalize_code, LabelEntry, LabelVocabulary, SHIPPED_CODES_CSV};

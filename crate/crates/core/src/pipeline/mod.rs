//! End-to-end runs: load, preprocess, split, fit the representation on
//! train, train the classifier, then score validation and test.

mod config;
mod params;
mod predictions;
mod report;
mod run;

pub use config::{PipelineConfig, SplitConfig, TuneConfig, SEED_ENV};
pub use params::{classifier_from_params, representation_from_params};
pub use predictions::{prediction_ids, read_predictions, write_predictions};
pub use report::{report, results_table, Headline, ReportFiles, Summary};
pub use run::{
    evaluate_predictions, load_vocabulary, prepare_data, run_pipeline, run_preprocess, run_split, run_synth,
    run_vectorize, tune_pipeline, validation_f1, PreprocessSummary, Prepared, RunReport, StageTiming, SynthOutput,
    TuningSummary, VectorizeSummary, REPORT_FILE,
};

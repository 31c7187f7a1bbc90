//! Hyperparameter search with a tree-structured Parzen estimator that
//! maximizes validation F1_micro.

mod presets;
mod space;
mod study;
mod tpe;

pub use presets::{preset, reference_configurations, ReferenceConfiguration, PRESET_NAMES};
pub use space::{sub_params, Condition, Dimension, Domain, Params, SearchSpace};
pub use study::{read_journal, run_study, Study, StudyResult, TrialRecord, TrialStatus};
pub use tpe::{suggest, Parzen, Sampler, TpeSettings};

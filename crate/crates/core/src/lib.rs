//! Multi-label ICD coding of free-text clinical descriptions.
//!
//! The pipeline runs preprocessing, text representation, multi-label
//! classification, stratified evaluation and hyperparameter search. Each
//! stage lives in its own module and can be used on its own.

pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod splitter;
pub mod tuner;
pub mod vectorize;

pub use error::{Error, ErrorKind, Result};

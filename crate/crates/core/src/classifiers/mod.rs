//! Multi-label classifiers over a feature matrix: a random forest, per-label
//! gradient-boosted trees and a feed-forward network.

pub mod boost;
mod columns;
pub mod forest;
pub mod mlp;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, LabelMatrix, ScoreMatrix};

pub use boost::{fit_gradient_boosting, BoostParams, GradientBoosting};
pub use forest::{fit_random_forest, ClassWeight, ForestParams, MaxFeatures, RandomForest};
pub use mlp::{fit_mlp, Mlp, MlpParams, Optimizer};

pub const MODEL_FORMAT: &str = "icd-coder-model";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Runs `f(0..n)` on up to `workers` threads and returns results in index
/// order, so the output never depends on the worker count.
pub(crate) fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| s.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker thread panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every index computed")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    RandomForest(ForestParams),
    #[serde(alias = "xgboost")]
    GradientBoosting(BoostParams),
    Mlp(MlpParams),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::Mlp(MlpParams::default())
    }
}

impl ClassifierConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RandomForest(_) => "random_forest",
            Self::GradientBoosting(_) => "xgboost",
            Self::Mlp(_) => "mlp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::RandomForest(p) => p.validate(),
            Self::GradientBoosting(p) => p.validate(),
            Self::Mlp(p) => p.validate(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        match &mut c {
            Self::RandomForest(p) => p.seed = seed,
            Self::GradientBoosting(p) => p.seed = seed,
            Self::Mlp(p) => p.seed = seed,
        }
        c
    }

    pub fn fit(&self, x: &FeatureMatrix, y: &LabelMatrix, workers: usize) -> Result<Model> {
        Ok(match self {
            Self::RandomForest(p) => Model::Forest(fit_random_forest(x, y, p, workers)?),
            Self::GradientBoosting(p) => Model::Boost(fit_gradient_boosting(x, y, p, workers)?),
            Self::Mlp(p) => Model::Mlp(fit_mlp(x, y, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Forest(RandomForest),
    Boost(GradientBoosting),
    Mlp(Mlp),
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    model: M,
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Self::Forest(m) => m.n_features,
            Self::Boost(m) => m.n_features,
            Self::Mlp(m) => m.n_inputs(),
        }
    }

    pub fn n_labels(&self) -> usize {
        match self {
            Self::Forest(m) => m.n_labels,
            Self::Boost(m) => m.n_labels(),
            Self::Mlp(m) => m.n_outputs(),
        }
    }

    pub fn predict_scores(&self, x: &FeatureMatrix) -> Result<ScoreMatrix> {
        if x.cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.cols(),
            });
        }
        ScoreMatrix::new(match self {
            Self::Forest(m) => m.predict_scores(x),
            Self::Boost(m) => m.predict_scores(x),
            Self::Mlp(m) => m.predict_scores(x),
        })
    }

    /// Labels whose score is at least `threshold`.
    pub fn predict(&self, x: &FeatureMatrix, threshold: f64) -> Result<LabelMatrix> {
        Ok(self.predict_scores(x)?.threshold(threshold))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Envelope {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let head: Envelope<serde_json::Value> = serde_json::from_str(text)?;
        if head.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file (format {:?})", head.format)));
        }
        if head.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                head.version
            )));
        }
        Ok(serde_json::from_value(head.model)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierConfig;
use crate::corpus::UnknownCodePolicy;
use crate::error::{Error, Result};
use crate::metrics::MacroScope;
use crate::preprocess::PreprocessConfig;
use crate::rng;
use crate::splitter::SplitRatios;
use crate::tuner::{self, TpeSettings};
use crate::vectorize::Representation;

pub const SEED_ENV: &str = "ICD_CODER_SEED";

const REPRESENTATION_PRESETS: [&str; 5] = ["bow", "tfidf", "lsa", "lda", "doc2vec"];
const CLASSIFIER_PRESETS: [&str; 3] = ["random_forest", "xgboost", "mlp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct SplitConfig {
    #[serde(default)]
    pub ratios: SplitRatios,
    /// Overrides the seed derived from the global one.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Reuse an existing `id,partition` file instead of splitting.
    #[serde(default)]
    pub file: Option<PathBuf>,
}


fn default_budget() -> usize {
    20
}

fn default_top() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Representation preset to search jointly; when absent the configured
    /// representation is fitted once and kept fixed.
    #[serde(default)]
    pub representation: Option<String>,
    pub classifier: String,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub sampler: TpeSettings,
    /// Defaults to `journal.jsonl` in the output directory.
    #[serde(default)]
    pub journal: Option<PathBuf>,
    #[serde(default = "default_top")]
    pub leaderboard_top: usize,
}

fn yes() -> bool {
    true
}

fn half() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

/// Everything one run needs. Component seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    /// Label vocabulary CSV; the bundled code list when absent.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default = "yes")]
    pub dedupe_vocabulary: bool,
    #[serde(default)]
    pub unknown_codes: UnknownCodePolicy,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub representation: Representation,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "half")]
    pub threshold: f64,
    #[serde(default)]
    pub macro_scope: MacroScope,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

impl PipelineConfig {
    pub fn new(dataset: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            vocabulary: None,
            dedupe_vocabulary: true,
            unknown_codes: UnknownCodePolicy::default(),
            preprocess: PreprocessConfig::default(),
            representation: Representation::default(),
            classifier: ClassifierConfig::default(),
            tune: None,
            split: SplitConfig::default(),
            threshold: 0.5,
            macro_scope: MacroScope::default(),
            out_dir: out_dir.into(),
            seed: 0,
            workers: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid pipeline config: {e}")))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.out_dir);
        if let Some(v) = &mut self.vocabulary {
            fix(v);
        }
        if let Some(f) = &mut self.split.file {
            fix(f);
        }
        if let Representation::Embeddings { matrix, ids } = &mut self.representation {
            fix(matrix);
            fix(ids);
        }
        if let Some(j) = self.tune.as_mut().and_then(|t| t.journal.as_mut()) {
            fix(j);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `ICD_CODER_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or_else(|| rng::derive(self.seed, 101))
    }

    pub fn representation_seed(&self) -> u64 {
        rng::derive(self.seed, 102)
    }

    pub fn classifier_seed(&self) -> u64 {
        rng::derive(self.seed, 103)
    }

    pub fn tuner_seed(&self) -> u64 {
        rng::derive(self.seed, 104)
    }

    pub fn journal_path(&self) -> PathBuf {
        self.tune
            .as_ref()
            .and_then(|t| t.journal.clone())
            .unwrap_or_else(|| self.out_dir.join("journal.jsonl"))
    }

    fn require_file(path: &Path, what: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::Config(format!("{what} {} does not exist", path.display())))
        }
    }

    /// Checks names, ranges and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        Self::require_file(&self.dataset, "dataset")?;
        if let Some(v) = &self.vocabulary {
            Self::require_file(v, "vocabulary")?;
        }
        if let Some(f) = &self.split.file {
            Self::require_file(f, "split file")?;
        } else {
            self.split.ratios.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Representation::Embeddings { matrix, ids } = &self.representation {
            Self::require_file(matrix, "embedding matrix")?;
            Self::require_file(ids, "embedding ids")?;
        }
        self.classifier.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some(t) = &self.tune {
            if t.budget == 0 {
                return Err(Error::Config("tuning budget must be at least 1".into()));
            }
            if let Some(r) = &t.representation {
                if !REPRESENTATION_PRESETS.contains(&r.as_str()) {
                    tuner::preset(r)?;
                    return Err(Error::Config(format!(
                        "{r:?} is not a representation preset; use one of {}",
                        REPRESENTATION_PRESETS.join(", ")
                    )));
                }
            }
            if !CLASSIFIER_PRESETS.contains(&t.classifier.as_str()) {
                tuner::preset(&t.classifier)?;
                return Err(Error::Config(format!(
                    "{:?} is not a classifier preset for this pipeline; use one of {} (finetune runs in the embedding exporter)",
                    t.classifier,
                    CLASSIFIER_PRESETS.join(", ")
                )));
            }
        }
        Ok(())
    }
}

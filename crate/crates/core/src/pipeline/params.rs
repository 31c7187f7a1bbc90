//! Turns sampled search-space points into representation and classifier
//! settings.

use std::collections::BTreeSet;

use serde_json::Value;

use crate::classifiers::{BoostParams, ClassWeight, ClassifierConfig, ForestParams, MaxFeatures, MlpParams, Optimizer};
use crate::error::{Error, Result};
use crate::tuner::Params;
use crate::vectorize::{Doc2VecParams, LdaParams, LsaParams, Representation, TermFilter};

struct Reader<'a> {
    params: &'a Params,
    used: BTreeSet<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(params: &'a Params) -> Self {
        Self {
            params,
            used: BTreeSet::new(),
        }
    }

    fn value(&mut self, key: &str) -> Result<&'a Value> {
        let (k, v) = self
            .params
            .get_key_value(key)
            .ok_or_else(|| Error::Config(format!("missing parameter {key}")))?;
        self.used.insert(k.as_str());
        Ok(v)
    }

    fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    fn int(&mut self, key: &str) -> Result<usize> {
        let v = self.value(key)?;
        v.as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::Config(format!("parameter {key} must be a non-negative integer, got {v}")))
    }

    fn float(&mut self, key: &str) -> Result<f64> {
        let v = self.value(key)?;
        v.as_f64().ok_or_else(|| Error::Config(format!("parameter {key} must be a number, got {v}")))
    }

    fn boolean(&mut self, key: &str) -> Result<bool> {
        let v = self.value(key)?;
        v.as_bool().ok_or_else(|| Error::Config(format!("parameter {key} must be a boolean, got {v}")))
    }

    /// A string, or `None` for JSON null.
    fn choice(&mut self, key: &str) -> Result<Option<&'a str>> {
        match self.value(key)? {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(s.as_str())),
            v => Err(Error::Config(format!("parameter {key} must be a string or null, got {v}"))),
        }
    }

    fn finish(self) -> Result<()> {
        let extra: Vec<&str> = self
            .params
            .keys()
            .map(String::as_str)
            .filter(|k| !self.used.contains(k))
            .collect();
        if extra.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unexpected parameters: {}", extra.join(", "))))
        }
    }
}

fn filter(r: &mut Reader) -> Result<TermFilter> {
    Ok(TermFilter {
        max_features: Some(r.int("max_features")?),
        min_df: r.int("min_df")?,
        max_df: r.float("max_df")?,
    })
}

/// Representation of kind `preset` with the sampled values; settings not
/// in the search space come from `base` when it is of the same kind.
pub fn representation_from_params(preset: &str, base: &Representation, params: &Params) -> Result<Representation> {
    let mut r = Reader::new(params);
    let rep = match preset {
        "bow" => Representation::Bow {
            filter: filter(&mut r)?,
        },
        "tfidf" => Representation::Tfidf {
            filter: filter(&mut r)?,
        },
        "lsa" => {
            let mut params = match base {
                Representation::Lsa { params, .. } => *params,
                _ => LsaParams::default(),
            };
            params.n_components = r.int("n_components")?;
            Representation::Lsa {
                filter: filter(&mut r)?,
                params,
            }
        }
        "lda" => {
            let mut params = match base {
                Representation::Lda { params, .. } => *params,
                _ => LdaParams::default(),
            };
            params.n_topics = r.int("n_topics")?;
            params.max_iter = r.int("max_iter")?;
            Representation::Lda {
                filter: filter(&mut r)?,
                params,
            }
        }
        "doc2vec" => {
            let mut params = match base {
                Representation::Doc2vec { params } => *params,
                _ => Doc2VecParams::default(),
            };
            params.vector_size = r.int("vector_size")?;
            params.min_count = r.int("min_count")?;
            params.epochs = r.int("epochs")?;
            Representation::Doc2vec { params }
        }
        other => return Err(Error::Config(format!("{other:?} is not a representation preset"))),
    };
    r.finish()?;
    Ok(rep)
}

fn optimizer(name: &str) -> Result<Optimizer> {
    match name.to_ascii_lowercase().as_str() {
        "adamw" => Ok(Optimizer::Adamw),
        "rmsprop" => Ok(Optimizer::Rmsprop),
        "sgd" => Ok(Optimizer::Sgd),
        _ => Err(Error::Config(format!("unknown optimizer {name:?}"))),
    }
}

pub fn classifier_from_params(preset: &str, base: &ClassifierConfig, params: &Params) -> Result<ClassifierConfig> {
    let mut r = Reader::new(params);
    let config = match preset {
        "random_forest" => {
            let mut p = match base {
                ClassifierConfig::RandomForest(p) => p.clone(),
                _ => ForestParams::default(),
            };
            p.n_estimators = r.int("n_estimators")?;
            p.max_depth = Some(r.int("max_depth")?);
            p.min_samples_split = r.int("min_samples_split")?;
            p.min_samples_leaf = r.int("min_samples_leaf")?;
            p.max_features = match r.choice("max_features")? {
                Some("sqrt") => MaxFeatures::Sqrt,
                Some("log2") => MaxFeatures::Log2,
                None => MaxFeatures::All,
                Some(other) => return Err(Error::Config(format!("unknown max_features {other:?}"))),
            };
            p.bootstrap = r.boolean("bootstrap")?;
            p.class_weight = match r.choice("class_weight")? {
                None => ClassWeight::None,
                Some("balanced") => ClassWeight::Balanced,
                Some(other) => return Err(Error::Config(format!("unknown class_weight {other:?}"))),
            };
            ClassifierConfig::RandomForest(p)
        }
        "xgboost" => {
            let mut p = match base {
                ClassifierConfig::GradientBoosting(p) => p.clone(),
                _ => BoostParams::default(),
            };
            p.n_estimators = r.int("n_estimators")?;
            p.learning_rate = r.float("learning_rate")?;
            p.max_depth = r.int("max_depth")?;
            p.subsample = r.float("subsample")?;
            p.colsample_bytree = r.float("colsample_bytree")?;
            p.gamma = r.float("gamma")?;
            p.min_child_weight = r.float("min_child_weight")?;
            p.reg_alpha = r.float("reg_alpha")?;
            p.reg_lambda = r.float("reg_lambda")?;
            ClassifierConfig::GradientBoosting(p)
        }
        "mlp" => {
            let mut p = match base {
                ClassifierConfig::Mlp(p) => p.clone(),
                _ => MlpParams::default(),
            };
            let n = r.int("n_layers")?;
            p.hidden_layers = (0..n).map(|i| r.int(&format!("n_units_l{i}"))).collect::<Result<_>>()?;
            if (n..3).any(|i| r.has(&format!("n_units_l{i}"))) {
                return Err(Error::Config(format!("layer widths beyond n_layers = {n}")));
            }
            p.dropout = r.float("dropout")?;
            p.learning_rate = r.float("learning_rate")?;
            p.batch_size = r.int("batch_size")?;
            p.epochs = r.int("epochs")?;
            p.optimizer = optimizer(r.choice("optimizer")?.unwrap_or("null"))?;
            ClassifierConfig::Mlp(p)
        }
        other => return Err(Error::Config(format!("{other:?} is not a classifier preset"))),
    };
    r.finish()?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tuner::{preset, reference_configurations};

    #[test]
    fn every_sample_maps_to_a_valid_setting() {
        let mut r = rng::seeded(8);
        for name in ["random_forest", "xgboost", "mlp"] {
            let space = preset(name).unwrap();
            for _ in 0..50 {
                let p = space.sample_uniform(&mut r);
                classifier_from_params(name, &ClassifierConfig::default(), &p).unwrap();
            }
        }
        for name in ["bow", "tfidf", "lsa", "lda", "doc2vec"] {
            let space = preset(name).unwrap();
            for _ in 0..20 {
                let p = space.sample_uniform(&mut r);
                let rep = representation_from_params(name, &Representation::default(), &p).unwrap();
                assert_eq!(rep.name(), name);
            }
        }
    }

    #[test]
    fn published_boosting_configuration_maps_exactly() {
        let c = &reference_configurations()[1];
        let ClassifierConfig::GradientBoosting(p) = classifier_from_params(c.preset, &ClassifierConfig::default(), &c.params).unwrap() else {
            panic!("expected boosting");
        };
        assert_eq!(p.n_estimators, 759);
        assert_eq!(p.max_depth, 9);
        assert_eq!(p.min_child_weight, 10.0);
        assert_eq!(p.reg_lambda, 6.7767174069276574);
    }

    #[test]
    fn mlp_layers_follow_n_layers() {
        let p: Params = serde_json::from_str(
            r#"{"n_layers":2,"n_units_l0":64,"n_units_l1":32,"dropout":0.1,"learning_rate":0.001,
                "batch_size":32,"epochs":10,"optimizer":"RMSprop"}"#,
        )
        .unwrap();
        let ClassifierConfig::Mlp(m) = classifier_from_params("mlp", &ClassifierConfig::default(), &p).unwrap() else {
            panic!("expected mlp");
        };
        assert_eq!(m.hidden_layers, vec![64, 32]);
        assert_eq!(m.optimizer, Optimizer::Rmsprop);
    }

    #[test]
    fn stray_keys_are_rejected() {
        let mut p = preset("tfidf").unwrap().sample_uniform(&mut rng::seeded(0));
        p.insert("bogus".into(), Value::from(1));
        assert!(representation_from_params("tfidf", &Representation::default(), &p).is_err());
    }
}

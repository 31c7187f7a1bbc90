//! Named search spaces for every representation and classifier, plus the
//! best published configurations.

use serde_json::json;

use super::space::{Dimension, Params, SearchSpace};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 9] = [
    "bow",
    "tfidf",
    "lsa",
    "lda",
    "doc2vec",
    "random_forest",
    "xgboost",
    "mlp",
    "finetune",
];

fn term_filter() -> Vec<Dimension> {
    vec![
        Dimension::int_step("max_features", 1000, 10000, 500),
        Dimension::int("min_df", 1, 5),
        Dimension::float_step("max_df", 0.80, 0.99, 0.01),
    ]
}

pub fn preset(name: &str) -> Result<SearchSpace> {
    let dims = match name {
        "bow" | "tfidf" => term_filter(),
        "lsa" => {
            let mut d = vec![Dimension::int_step("n_components", 50, 500, 50)];
            d.extend(term_filter());
            d
        }
        "lda" => {
            let mut d = vec![
                Dimension::int_step("n_topics", 10, 100, 10),
                Dimension::int_step("max_iter", 10, 50, 10),
            ];
            d.extend(term_filter());
            d
        }
        "doc2vec" => vec![
            Dimension::int_step("vector_size", 100, 500, 50),
            Dimension::int("min_count", 1, 5),
            Dimension::int_step("epochs", 20, 100, 10),
        ],
        "random_forest" => vec![
            Dimension::int("n_estimators", 5, 50),
            Dimension::int("max_depth", 5, 25),
            Dimension::int("min_samples_split", 2, 6),
            Dimension::int("min_samples_leaf", 1, 4),
            Dimension::categorical("max_features", vec![json!("sqrt"), json!("log2"), json!(null)]),
            Dimension::categorical("bootstrap", vec![json!(true), json!(false)]),
            Dimension::categorical("class_weight", vec![json!(null), json!("balanced")]),
        ],
        "xgboost" => vec![
            Dimension::int("n_estimators", 100, 800),
            Dimension::log_float("learning_rate", 1e-3, 0.3),
            Dimension::int("max_depth", 3, 12),
            Dimension::float("subsample", 0.5, 1.0),
            Dimension::float("colsample_bytree", 0.5, 1.0),
            Dimension::float("gamma", 0.0, 5.0),
            Dimension::int("min_child_weight", 1, 10),
            Dimension::float("reg_alpha", 0.0, 10.0),
            Dimension::float("reg_lambda", 0.0, 10.0),
        ],
        "mlp" => {
            let mut d = vec![Dimension::int("n_layers", 0, 3)];
            for i in 0..3 {
                d.push(Dimension::int_step(&format!("n_units_l{i}"), 32, 512, 32).when("n_layers", i + 1));
            }
            d.extend([
                Dimension::float_step("dropout", 0.0, 0.5, 0.1),
                Dimension::log_float("learning_rate", 1e-5, 1e-2),
                Dimension::categorical("batch_size", vec![json!(32), json!(64), json!(128)]),
                Dimension::int("epochs", 10, 40),
                Dimension::categorical("optimizer", vec![json!("AdamW"), json!("RMSprop"), json!("SGD")]),
            ]);
            d
        }
        "finetune" => vec![
            Dimension::int_step("hidden_dim", 256, 1536, 128),
            Dimension::float_step("dropout", 0.0, 0.2, 0.05),
            Dimension::log_float("lr", 1e-6, 5e-5),
            Dimension::log_float("lr_head", 1e-4, 5e-3),
            Dimension::categorical("batch_size", vec![json!(8), json!(16)]),
            Dimension::int("epochs", 5, 15),
            Dimension::int("frozen_epochs", 1, 3),
            Dimension::float_step("warmup_percentage", 0.0, 0.2, 0.05),
            Dimension::float_step("pos_weight_alpha", 0.0, 1.0, 0.1),
            Dimension::float_step("max_grad_norm", 0.2, 1.0, 0.1),
        ],
        other => {
            return Err(Error::Config(format!(
                "unknown search space preset {other:?}; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(SearchSpace::new(name, dims))
}

/// A published configuration: name, the preset it belongs to, and values.
pub struct ReferenceConfiguration {
    pub name: &'static str,
    pub preset: &'static str,
    pub params: Params,
}

fn params(pairs: &[(&str, serde_json::Value)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn xgb(n: i64, lr: f64, depth: i64, sub: f64, col: f64, gamma: f64, mcw: i64, alpha: f64, lambda: f64) -> Params {
    params(&[
        ("n_estimators", json!(n)),
        ("learning_rate", json!(lr)),
        ("max_depth", json!(depth)),
        ("subsample", json!(sub)),
        ("colsample_bytree", json!(col)),
        ("gamma", json!(gamma)),
        ("min_child_weight", json!(mcw)),
        ("reg_alpha", json!(alpha)),
        ("reg_lambda", json!(lambda)),
    ])
}

/// The five best configurations by validation F1_micro, best first.
pub fn reference_configurations() -> Vec<ReferenceConfiguration> {
    vec![
        ReferenceConfiguration {
            name: "finetune_e5_large",
            preset: "finetune",
            params: params(&[
                ("hidden_dim", json!(1280)),
                ("dropout", json!(0.1)),
                ("lr", json!(1.5243337984464924e-5)),
                ("lr_head", json!(0.000175389640525079)),
                ("batch_size", json!(8)),
                ("epochs", json!(15)),
                ("frozen_epochs", json!(1)),
                ("warmup_percentage", json!(0.05)),
                ("pos_weight_alpha", json!(0.0)),
                ("max_grad_norm", json!(1.0)),
            ]),
        },
        ReferenceConfiguration {
            name: "mlt_xgboost_e5_large",
            preset: "xgboost",
            params: xgb(
                759,
                0.06812461682319591,
                9,
                0.5810888790819708,
                0.6884800605089568,
                0.6242871360525342,
                10,
                1.2494601393943636,
                6.7767174069276574,
            ),
        },
        ReferenceConfiguration {
            name: "mlt_xgboost_bio_lord",
            preset: "xgboost",
            params: xgb(
                474,
                0.06814228540442097,
                9,
                0.6899201652382992,
                0.6088435881640017,
                1.4325774737625496,
                4,
                0.5647227880560319,
                4.147124014825858,
            ),
        },
        ReferenceConfiguration {
            name: "mlt_xgboost_e5_base",
            preset: "xgboost",
            params: xgb(
                684,
                0.08897215138919123,
                8,
                0.7884814838592877,
                0.8828431142426094,
                0.24276864122614503,
                10,
                2.756079736396261,
                0.6687189811925814,
            ),
        },
        ReferenceConfiguration {
            name: "mlt_xgboost_paraphrase_multilingual",
            preset: "xgboost",
            params: xgb(
                484,
                0.11167218746749885,
                7,
                0.7860690412680696,
                0.9280614811263148,
                0.23647686141974913,
                6,
                1.1853215759117572,
                7.951972267900953,
            ),
        },
    ]
}

//! Search spaces: named dimensions over integer grids, real intervals and
//! categorical sets, with optional activation conditions.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One sampled configuration, keyed by dimension name. Inactive
/// conditional dimensions are absent.
pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Int { low: i64, high: i64, step: i64 },
    Float { low: f64, high: f64, step: Option<f64>, log: bool },
    Categorical { choices: Vec<Value> },
}

/// Active only when integer dimension `parent` is at least `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub min: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl Dimension {
    pub fn int(name: &str, low: i64, high: i64) -> Self {
        Self::int_step(name, low, high, 1)
    }

    pub fn int_step(name: &str, low: i64, high: i64, step: i64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Int { low, high, step },
            condition: None,
        }
    }

    pub fn float(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Float { low, high, step: None, log: false },
            condition: None,
        }
    }

    pub fn float_step(name: &str, low: f64, high: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Float { low, high, step: Some(step), log: false },
            condition: None,
        }
    }

    pub fn log_float(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Float { low, high, step: None, log: true },
            condition: None,
        }
    }

    pub fn categorical(name: &str, choices: Vec<Value>) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Categorical { choices },
            condition: None,
        }
    }

    pub fn when(mut self, parent: &str, min: i64) -> Self {
        self.condition = Some(Condition {
            parent: parent.to_string(),
            min,
        });
        self
    }

    pub fn is_active(&self, params: &Params) -> bool {
        match &self.condition {
            None => true,
            Some(c) => params.get(&c.parent).and_then(Value::as_i64).is_some_and(|v| v >= c.min),
        }
    }

    /// Bounds of the continuous coordinate the density model works in:
    /// log scale for log dimensions, widened by half a step on grids.
    pub(crate) fn internal_bounds(&self) -> Option<(f64, f64)> {
        match &self.domain {
            Domain::Int { low, high, step } => {
                let h = *step as f64 / 2.0;
                Some((*low as f64 - h, *high as f64 + h))
            }
            Domain::Float { low, high, step, log } => {
                if *log {
                    Some((low.ln(), high.ln()))
                } else {
                    let h = step.unwrap_or(0.0) / 2.0;
                    Some((low - h, high + h))
                }
            }
            Domain::Categorical { .. } => None,
        }
    }

    pub(crate) fn to_internal(&self, v: &Value) -> Option<f64> {
        let x = v.as_f64()?;
        match &self.domain {
            Domain::Float { log: true, .. } => Some(x.ln()),
            Domain::Categorical { .. } => None,
            _ => Some(x),
        }
    }

    /// Maps an internal coordinate back to a legal value on the grid.
    pub(crate) fn from_internal(&self, x: f64) -> Value {
        match &self.domain {
            Domain::Int { low, high, step } => {
                let k = ((x - *low as f64) / *step as f64).round().max(0.0) as i64;
                let top = (high - low) / step;
                Value::from(low + k.min(top) * step)
            }
            Domain::Float { low, high, step, log } => {
                let v = if *log { x.exp() } else { x };
                let v = match step {
                    Some(s) => {
                        let top = ((high - low) / s + 1e-9).floor();
                        let k = ((v - low) / s).round().clamp(0.0, top);
                        round_to_step(low + k * s, *s)
                    }
                    None => v,
                };
                Value::from(v.clamp(*low, *high))
            }
            Domain::Categorical { .. } => unreachable!("categorical dimensions have no internal coordinate"),
        }
    }

    pub fn sample_uniform(&self, r: &mut impl Rng) -> Value {
        match &self.domain {
            Domain::Int { low, high, step } => Value::from(low + r.gen_range(0..=(high - low) / step) * step),
            Domain::Float { low, high, step: Some(s), .. } => {
                let top = ((high - low) / s + 1e-9).floor() as i64;
                Value::from(round_to_step(low + r.gen_range(0..=top) as f64 * s, *s))
            }
            Domain::Float { low, high, log: true, .. } => Value::from(r.gen_range(low.ln()..=high.ln()).exp().clamp(*low, *high)),
            Domain::Float { low, high, .. } => Value::from(r.gen_range(*low..=*high)),
            Domain::Categorical { choices } => choices[r.gen_range(0..choices.len())].clone(),
        }
    }

    /// Whether `v` is a legal value of this dimension.
    pub fn contains(&self, v: &Value) -> bool {
        match &self.domain {
            Domain::Int { low, high, step } => {
                v.as_i64().is_some_and(|x| x >= *low && x <= *high && (x - low) % step == 0)
            }
            Domain::Float { low, high, step, .. } => v.as_f64().is_some_and(|x| {
                x >= *low
                    && x <= *high
                    && step.is_none_or(|s| {
                        let k = (x - low) / s;
                        (k - k.round()).abs() < 1e-6
                    })
            }),
            Domain::Categorical { choices } => choices.contains(v),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("dimension {}: {m}", self.name)));
        match &self.domain {
            Domain::Int { low, high, step } if *step < 1 || low > high => bad("needs low <= high and step >= 1"),
            Domain::Float { low, high, step, log } => {
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    return bad("needs finite low <= high");
                }
                if *log && *low <= 0.0 {
                    return bad("log scale needs a positive lower bound");
                }
                if step.is_some_and(|s| !(s > 0.0)) {
                    return bad("step must be positive");
                }
                Ok(())
            }
            Domain::Categorical { choices } if choices.is_empty() => bad("needs at least one choice"),
            _ => Ok(()),
        }
    }
}

/// Rounds away accumulated binary error so grid values print cleanly.
fn round_to_step(v: f64, step: f64) -> f64 {
    let digits = (-step.log10()).ceil().max(0.0) as i32 + 6;
    let scale = 10f64.powi(digits);
    (v * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub name: String,
    pub dimensions: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(name: &str, dimensions: Vec<Dimension>) -> Self {
        Self {
            name: name.to_string(),
            dimensions,
        }
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::invalid(format!("search space {:?} has no dimensions", self.name)));
        }
        for (i, d) in self.dimensions.iter().enumerate() {
            d.validate()?;
            if self.dimensions[..i].iter().any(|e| e.name == d.name) {
                return Err(Error::invalid(format!("duplicate dimension {}", d.name)));
            }
            if let Some(c) = &d.condition {
                let parent_ok = self.dimensions[..i]
                    .iter()
                    .any(|e| e.name == c.parent && matches!(e.domain, Domain::Int { .. }));
                if !parent_ok {
                    return Err(Error::invalid(format!(
                        "dimension {} depends on {}, which must be an earlier integer dimension",
                        d.name, c.parent
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when `params` has exactly the active dimensions, each in range.
    pub fn contains(&self, params: &Params) -> bool {
        let mut active = 0;
        for d in &self.dimensions {
            match (d.is_active(params), params.get(&d.name)) {
                (true, Some(v)) if d.contains(v) => active += 1,
                (false, None) => {}
                _ => return false,
            }
        }
        active == params.len()
    }

    pub fn sample_uniform(&self, r: &mut impl Rng) -> Params {
        let mut p = Params::new();
        for d in &self.dimensions {
            if d.is_active(&p) {
                p.insert(d.name.clone(), d.sample_uniform(r));
            }
        }
        p
    }

    /// Joins spaces, prefixing every dimension with `space.`.
    pub fn combine(name: &str, parts: &[SearchSpace]) -> Self {
        let dimensions = parts
            .iter()
            .flat_map(|s| {
                s.dimensions.iter().map(move |d| Dimension {
                    name: format!("{}.{}", s.name, d.name),
                    domain: d.domain.clone(),
                    condition: d.condition.as_ref().map(|c| Condition {
                        parent: format!("{}.{}", s.name, c.parent),
                        min: c.min,
                    }),
                })
            })
            .collect();
        Self::new(name, dimensions)
    }
}

/// Entries of `params` under `prefix.`, with the prefix removed.
pub fn sub_params(params: &Params, prefix: &str) -> Params {
    let head = format!("{prefix}.");
    params
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(&head).map(|s| (s.to_string(), v.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use serde_json::json;

    fn space() -> SearchSpace {
        SearchSpace::new(
            "t",
            vec![
                Dimension::int("n_layers", 0, 2),
                Dimension::int_step("w0", 32, 512, 32).when("n_layers", 1),
                Dimension::int_step("w1", 32, 512, 32).when("n_layers", 2),
                Dimension::float_step("df", 0.8, 0.99, 0.01),
                Dimension::log_float("lr", 1e-5, 1e-2),
                Dimension::categorical("opt", vec![json!("a"), json!(null), json!(true)]),
            ],
        )
    }

    #[test]
    fn uniform_samples_respect_bounds_and_conditions() {
        let s = space();
        s.validate().unwrap();
        let mut r = rng::seeded(4);
        for _ in 0..500 {
            let p = s.sample_uniform(&mut r);
            assert!(s.contains(&p), "{p:?}");
        }
    }

    #[test]
    fn grid_values_are_clean() {
        let d = Dimension::float_step("df", 0.8, 0.99, 0.01);
        assert_eq!(d.from_internal(0.8349), json!(0.83));
        assert_eq!(d.from_internal(2.0), json!(0.99));
        let i = Dimension::int_step("w", 32, 512, 32);
        assert_eq!(i.from_internal(47.0), json!(32));
        assert_eq!(i.from_internal(49.0), json!(64));
        assert_eq!(i.from_internal(9999.0), json!(512));
    }

    #[test]
    fn inactive_dimension_must_be_absent() {
        let s = space();
        let mut p = s.sample_uniform(&mut rng::seeded(1));
        p.insert("n_layers".into(), json!(0));
        p.remove("w1");
        p.insert("w0".into(), json!(64));
        assert!(!s.contains(&p));
        p.remove("w0");
        assert!(s.contains(&p));
    }

    #[test]
    fn bad_spaces_are_rejected() {
        assert!(SearchSpace::new("e", vec![]).validate().is_err());
        assert!(SearchSpace::new("c", vec![Dimension::int("a", 0, 1).when("b", 1)]).validate().is_err());
        assert!(SearchSpace::new("l", vec![Dimension::log_float("a", 0.0, 1.0)]).validate().is_err());
    }

    #[test]
    fn combined_space_prefixes_names() {
        let c = SearchSpace::combine("both", &[space(), SearchSpace::new("u", vec![Dimension::int("k", 1, 3)])]);
        c.validate().unwrap();
        assert_eq!(c.dimensions[1].condition.as_ref().unwrap().parent, "t.n_layers");
        let p = c.sample_uniform(&mut rng::seeded(2));
        assert!(c.contains(&p));
        assert_eq!(sub_params(&p, "u").len(), 1);
    }
}

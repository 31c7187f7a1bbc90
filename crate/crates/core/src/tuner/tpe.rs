//! Tree-structured Parzen estimator over independent dimensions.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::space::{Dimension, Domain, Params, SearchSpace};
use super::study::TrialRecord;
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeSettings {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_ei_candidates: usize,
    /// Weight of the uniform prior component in every density.
    pub prior_weight: f64,
    /// Smallest kernel bandwidth as a fraction of the dimension's range.
    pub min_bandwidth: f64,
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            n_startup: 10,
            gamma: 0.25,
            n_ei_candidates: 24,
            prior_weight: 1.0,
            min_bandwidth: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Tpe(TpeSettings),
    Random,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Tpe(TpeSettings::default())
    }
}

/// Mixture of Gaussians truncated to `[low, high]`.
#[derive(Debug, Clone)]
pub struct Parzen {
    low: f64,
    high: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl Parzen {
    pub fn new(observations: &[f64], low: f64, high: f64, settings: &TpeSettings) -> Self {
        let range = (high - low).max(f64::MIN_POSITIVE);
        let mut sorted: Vec<f64> = observations.iter().map(|v| v.clamp(low, high)).collect();
        sorted.sort_by(f64::total_cmp);
        // the floor shrinks as observations accumulate, never below min_bandwidth
        let floor = (settings.min_bandwidth * range).max(range / (sorted.len() as f64 + 1.0).min(100.0));
        let mut mus = vec![(low + high) / 2.0];
        let mut sigmas = vec![range];
        let mut weights = vec![settings.prior_weight];
        for (i, &x) in sorted.iter().enumerate() {
            // gaps to the neighbouring observations; the bounds do not count
            let left = if i == 0 { 0.0 } else { x - sorted[i - 1] };
            let right = sorted.get(i + 1).map_or(0.0, |&r| r - x);
            let gap = if sorted.len() == 1 { range } else { left.max(right) };
            mus.push(x);
            sigmas.push(gap.clamp(floor, range));
            weights.push(1.0);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self {
            low,
            high,
            mus,
            sigmas,
            weights,
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.mus.len())
            .map(|k| {
                let (mu, s) = (self.mus[k], self.sigmas[k]);
                let mass = normal_cdf((self.high - mu) / s) - normal_cdf((self.low - mu) / s);
                let z = (x - mu) / s;
                self.weights[k].ln() - 0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - mass.max(1e-300).ln()
            })
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    pub fn sample(&self, r: &mut impl Rng) -> f64 {
        let u: f64 = r.gen();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        for _ in 0..100 {
            let z: f64 = StandardNormal.sample(r);
            let x = self.mus[k] + self.sigmas[k] * z;
            if x >= self.low && x <= self.high {
                return x;
            }
        }
        self.mus[k]
    }
}

/// Smoothed category frequencies: every choice starts with the prior weight
/// spread evenly.
fn categorical_probs(n_choices: usize, counts: &[usize], prior: f64) -> Vec<f64> {
    let total = counts.iter().sum::<usize>() as f64 + prior;
    counts
        .iter()
        .map(|&c| (c as f64 + prior / n_choices as f64) / total)
        .collect()
}

/// Splits complete trials into the best `ceil(gamma n)` and the rest.
fn split_history(history: &[TrialRecord], gamma: f64) -> (Vec<&TrialRecord>, Vec<&TrialRecord>) {
    let mut done: Vec<&TrialRecord> = history.iter().filter(|t| t.objective.is_some()).collect();
    done.sort_by(|a, b| {
        b.objective
            .partial_cmp(&a.objective)
            .unwrap_or(Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let n_good = ((gamma * done.len() as f64).ceil() as usize).clamp(1, done.len().max(1));
    let bad = done.split_off(n_good.min(done.len()));
    (done, bad)
}

fn suggest_dimension(
    d: &Dimension,
    good: &[&TrialRecord],
    bad: &[&TrialRecord],
    settings: &TpeSettings,
    r: &mut rng::Rng,
) -> serde_json::Value {
    let values = |set: &[&TrialRecord]| -> Vec<serde_json::Value> {
        set.iter().filter_map(|t| t.params.get(&d.name).cloned()).collect()
    };
    let (gv, bv) = (values(good), values(bad));
    match &d.domain {
        Domain::Categorical { choices } => {
            let count = |vs: &[serde_json::Value]| -> Vec<usize> {
                choices.iter().map(|c| vs.iter().filter(|v| *v == c).count()).collect()
            };
            let pg = categorical_probs(choices.len(), &count(&gv), settings.prior_weight);
            let pb = categorical_probs(choices.len(), &count(&bv), settings.prior_weight);
            let mut best = (f64::NEG_INFINITY, 0);
            for _ in 0..settings.n_ei_candidates {
                let u: f64 = r.gen();
                let mut acc = 0.0;
                let mut k = choices.len() - 1;
                for (i, p) in pg.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let score = pg[k].ln() - pb[k].ln();
                if score > best.0 {
                    best = (score, k);
                }
            }
            choices[best.1].clone()
        }
        _ => {
            let (low, high) = d.internal_bounds().expect("numeric dimension");
            let to_x = |vs: &[serde_json::Value]| -> Vec<f64> { vs.iter().filter_map(|v| d.to_internal(v)).collect() };
            let lg = Parzen::new(&to_x(&gv), low, high, settings);
            let lb = Parzen::new(&to_x(&bv), low, high, settings);
            let mut best = (f64::NEG_INFINITY, (low + high) / 2.0);
            for _ in 0..settings.n_ei_candidates {
                let x = lg.sample(r);
                let score = lg.log_pdf(x) - lb.log_pdf(x);
                if score > best.0 {
                    best = (score, x);
                }
            }
            d.from_internal(best.1)
        }
    }
}

/// Next point to evaluate given the trials so far. Uniform until
/// `n_startup` trials have completed, then TPE per dimension.
pub fn suggest(history: &[TrialRecord], space: &SearchSpace, sampler: &Sampler, r: &mut rng::Rng) -> Result<Params> {
    space.validate()?;
    let settings = match sampler {
        Sampler::Tpe(s) if history.iter().filter(|t| t.objective.is_some()).count() >= s.n_startup => s,
        _ => return Ok(space.sample_uniform(r)),
    };
    let (good, bad) = split_history(history, settings.gamma);
    let mut params = Params::new();
    for d in &space.dimensions {
        if d.is_active(&params) {
            let v = suggest_dimension(d, &good, &bad, settings, r);
            params.insert(d.name.clone(), v);
        }
    }
    Ok(params)
}

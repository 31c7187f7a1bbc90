//! Sequential studies with an append-only JSONL journal.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::space::{Params, SearchSpace};
use super::tpe::{suggest, Sampler};
use crate::classifiers::parallel_map;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: usize,
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    pub status: TrialStatus,
    /// Seconds spent in the objective.
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Equality ignores wall time, the one field that varies between reruns.
impl PartialEq for TrialRecord {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.params == other.params
            && self.objective.map(f64::to_bits) == other.objective.map(f64::to_bits)
            && self.status == other.status
            && self.error == other.error
    }
}

impl TrialRecord {
    fn check(&self) -> Result<()> {
        let complete = self.status == TrialStatus::Complete;
        if complete != self.objective.is_some() {
            return Err(Error::Format(format!(
                "trial {} has status {:?} but objective {:?}",
                self.id, self.status, self.objective
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub space: String,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
    pub best: TrialRecord,
}

impl StudyResult {
    /// Complete trials, best first; ties keep trial order.
    pub fn ranked(&self) -> Vec<&TrialRecord> {
        let mut done: Vec<&TrialRecord> = self.trials.iter().filter(|t| t.objective.is_some()).collect();
        done.sort_by(|a, b| b.objective.partial_cmp(&a.objective).expect("finite objectives").then(a.id.cmp(&b.id)));
        done
    }

    /// Rows of `configuration,parameter,value` for the `top` best trials,
    /// each block closed by its objective.
    pub fn write_leaderboard(&self, path: &Path, top: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{other:?}")),
        })?;
        w.write_record(["configuration", "parameter", "value"])?;
        for t in self.ranked().into_iter().take(top) {
            let name = format!("{}_trial_{}", self.space, t.id);
            for (k, v) in &t.params {
                let value = match v {
                    serde_json::Value::Null => "None".to_string(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                w.write_record([name.as_str(), k.as_str(), value.as_str()])?;
            }
            let objective = t.objective.expect("ranked trials are complete").to_string();
            w.write_record([name.as_str(), "validation_f1_micro", objective.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub struct Study {
    space: SearchSpace,
    seed: u64,
    sampler: Sampler,
    trials: Vec<TrialRecord>,
    journal: Option<PathBuf>,
}

impl Study {
    pub fn new(space: SearchSpace, seed: u64, sampler: Sampler) -> Result<Self> {
        space.validate()?;
        Ok(Self {
            space,
            seed,
            sampler,
            trials: Vec::new(),
            journal: None,
        })
    }

    /// Attaches a journal, replaying any trials it already holds. A torn
    /// final line left by an interrupted write is dropped.
    pub fn with_journal(mut self, path: &Path) -> Result<Self> {
        if path.exists() {
            let (trials, torn) = replay(path)?;
            if torn {
                // drop the partial line so later appends start on a clean one
                let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
                for t in &trials {
                    writeln!(f, "{}", serde_json::to_string(t)?).map_err(|e| Error::io(path, e))?;
                }
            }
            self.trials = trials;
        }
        self.journal = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    /// Suggestion for trial `id`, seeing only trials before it.
    fn ask_at(&self, id: usize) -> Result<Params> {
        let mut r = rng::seeded(rng::derive(self.seed, id as u64));
        suggest(&self.trials, &self.space, &self.sampler, &mut r)
    }

    pub fn ask(&self) -> Result<Params> {
        self.ask_at(self.trials.len())
    }

    pub fn tell(&mut self, params: Params, outcome: Result<f64>, wall_time: f64) -> Result<&TrialRecord> {
        let id = self.trials.len();
        let (objective, status, error) = match outcome {
            Ok(v) if v.is_finite() => (Some(v), TrialStatus::Complete, None),
            Ok(v) => (None, TrialStatus::Failed, Some(format!("objective is not finite ({v})"))),
            Err(e) => (None, TrialStatus::Failed, Some(e.to_string())),
        };
        let record = TrialRecord {
            id,
            params,
            objective,
            status,
            wall_time,
            error,
        };
        if let Some(path) = &self.journal {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(path, e))?;
        }
        self.trials.push(record);
        Ok(self.trials.last().expect("just pushed"))
    }

    /// Runs trials until the study holds `n_trials`.
    pub fn optimize(&mut self, n_trials: usize, mut objective: impl FnMut(&Params) -> Result<f64>) -> Result<()> {
        while self.trials.len() < n_trials {
            let params = self.ask()?;
            let start = Instant::now();
            let outcome = objective(&params);
            self.tell(params, outcome, start.elapsed().as_secs_f64())?;
        }
        Ok(())
    }

    /// Evaluates up to `workers` trials at a time. Every trial in a batch is
    /// suggested from the same history, so the sequence of suggestions
    /// differs from a single-worker run.
    pub fn optimize_parallel<F>(&mut self, n_trials: usize, workers: usize, objective: F) -> Result<()>
    where
        F: Fn(&Params) -> Result<f64> + Sync,
    {
        if workers <= 1 {
            return self.optimize(n_trials, objective);
        }
        while self.trials.len() < n_trials {
            let base = self.trials.len();
            let k = workers.min(n_trials - base);
            let batch: Vec<Params> = (base..base + k).map(|id| self.ask_at(id)).collect::<Result<_>>()?;
            let outcomes = parallel_map(k, workers, |i| {
                let start = Instant::now();
                let out = objective(&batch[i]);
                (out, start.elapsed().as_secs_f64())
            });
            for (params, (out, wall)) in batch.into_iter().zip(outcomes) {
                self.tell(params, out, wall)?;
            }
        }
        Ok(())
    }

    pub fn result(&self) -> Result<StudyResult> {
        let best = self
            .trials
            .iter()
            .filter(|t| t.objective.is_some())
            .fold(None::<&TrialRecord>, |best, t| match best {
                Some(b) if b.objective >= t.objective => Some(b),
                _ => Some(t),
            })
            .ok_or(Error::AllTrialsFailed(self.trials.len()))?;
        Ok(StudyResult {
            space: self.space.name.clone(),
            seed: self.seed,
            trials: self.trials.clone(),
            best: best.clone(),
        })
    }
}

pub fn read_journal(path: &Path) -> Result<Vec<TrialRecord>> {
    Ok(replay(path)?.0)
}

fn replay(path: &Path) -> Result<(Vec<TrialRecord>, bool)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut trials = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if i + 1 == lines.len() => return Ok((trials, true)),
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        record.check()?;
        if record.id != trials.len() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected trial {} but found {}", trials.len(), record.id),
            });
        }
        trials.push(record);
    }
    Ok((trials, false))
}

/// Runs a fresh single-worker study.
pub fn run_study(
    objective: impl FnMut(&Params) -> Result<f64>,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    sampler: &Sampler,
) -> Result<StudyResult> {
    if n_trials == 0 {
        return Err(Error::invalid("a study needs at least one trial"));
    }
    let mut study = Study::new(space.clone(), seed, *sampler)?;
    study.optimize(n_trials, objective)?;
    study.result()
}

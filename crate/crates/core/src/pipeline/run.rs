use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::params::{classifier_from_params, representation_from_params};
use super::predictions::{prediction_ids, read_predictions, write_predictions};
use crate::classifiers::ClassifierConfig;
use crate::corpus::{
    frequency_profile, generate_synthetic_corpus, load_dataset, load_label_vocabulary, FrequencyProfile, LabelVocabulary,
    LabeledDataset, RejectionReport, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, LabelMatrix};
use crate::metrics::{evaluate, MetricsReport};
use crate::preprocess::preprocess_corpus;
use crate::splitter::{split_dataset, Partition, SplitAssignment, SplitWarnings};
use crate::tuner::{preset, sub_params, Params, Sampler, SearchSpace, Study, StudyResult};
use crate::vectorize::{tokenize, write_embeddings, EmbeddingTable, FittedRepresentation, Representation};

pub const REPORT_FILE: &str = "run_report.json";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSummary {
    pub space: String,
    pub trials: usize,
    pub failed_trials: usize,
    pub best_trial: usize,
    pub best_validation_f1_micro: f64,
    pub best_params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    /// Settings that reproduce this run, with tuned values filled in.
    pub config: PipelineConfig,
    pub representation: String,
    pub classifier: String,
    pub feature_dim: usize,
    pub split_sizes: [usize; 3],
    pub split_warnings: SplitWarnings,
    pub label_profile: FrequencyProfile,
    pub validation: MetricsReport,
    pub test: MetricsReport,
    pub class_csv: PathBuf,
    pub timings: Vec<StageTiming>,
    pub artifacts: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningSummary>,
}

impl RunReport {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(REPORT_FILE);
        if !path.is_file() {
            return Err(Error::MissingArtifact(path));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        });
        self.0.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f(std::io::BufWriter::new(file))
}

pub fn load_vocabulary(config: &PipelineConfig) -> Result<LabelVocabulary> {
    match &config.vocabulary {
        Some(p) => load_label_vocabulary(p, config.dedupe_vocabulary),
        None => LabelVocabulary::shipped(config.dedupe_vocabulary),
    }
}

/// Preprocessed corpus with its split and per-partition views.
pub struct Prepared {
    pub dataset: LabeledDataset,
    pub split: SplitAssignment,
    pub tokens: Vec<Vec<String>>,
    rows: [Vec<usize>; 3],
    labels: [LabelMatrix; 3],
}

impl Prepared {
    pub fn rows(&self, p: Partition) -> &[usize] {
        &self.rows[p.index()]
    }

    pub fn ids(&self, p: Partition) -> Vec<&str> {
        self.rows(p).iter().map(|&i| self.dataset.documents()[i].id.as_str()).collect()
    }

    pub fn tokens(&self, p: Partition) -> Vec<Vec<String>> {
        self.rows(p).iter().map(|&i| self.tokens[i].clone()).collect()
    }

    pub fn labels(&self, p: Partition) -> &LabelMatrix {
        &self.labels[p.index()]
    }

    pub fn fit_representation(&self, rep: &Representation) -> Result<FittedRepresentation> {
        rep.fit(&self.ids(Partition::Train), &self.tokens(Partition::Train))
    }

    pub fn features(&self, fitted: &FittedRepresentation, p: Partition) -> Result<FeatureMatrix> {
        fitted.transform(&self.ids(p), &self.tokens(p))
    }
}

fn load_stage(config: &PipelineConfig, timer: &mut Timer) -> Result<(LabeledDataset, RejectionReport)> {
    timer.run("load", || {
        let vocab = load_vocabulary(config)?;
        let (ds, rejections) = load_dataset(&config.dataset, vocab, config.unknown_codes)?;
        write_with(&config.out_dir.join("rejections.csv"), |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["line", "id", "code"])?;
            for r in &rejections.rejections {
                w.write_record([r.line.to_string(), r.id.clone(), r.code.clone()])?;
            }
            w.flush().map_err(|e| Error::io("rejections.csv", e))
        })?;
        Ok((ds, rejections))
    })
}

fn preprocess_stage(config: &PipelineConfig, ds: &LabeledDataset, timer: &mut Timer) -> Result<(LabeledDataset, usize)> {
    timer.run("preprocess", || {
        let (clean, empty) = preprocess_corpus(ds, &config.preprocess)?;
        write_with(&config.out_dir.join("empty_text.csv"), |w| empty.write_csv(w))?;
        Ok((clean, empty.entries.len()))
    })
}

fn split_stage(config: &PipelineConfig, ds: &LabeledDataset, timer: &mut Timer) -> Result<SplitAssignment> {
    timer.run("split", || {
        let split = match &config.split.file {
            Some(f) => SplitAssignment::load(f)?,
            None => split_dataset(ds, config.split.ratios, config.split_seed())?,
        };
        split.save(config.out_dir.join("split.csv"))?;
        write_json(&config.out_dir.join("split_warnings.json"), &split.warnings)?;
        Ok(split)
    })
}

fn prepare(config: &PipelineConfig, timer: &mut Timer) -> Result<Prepared> {
    config.validate()?;
    create_dir(&config.out_dir)?;
    let (raw, _) = load_stage(config, timer)?;
    let (dataset, _) = preprocess_stage(config, &raw, timer)?;
    let split = split_stage(config, &dataset, timer)?;
    let rows = split.dataset_rows(&dataset)?;
    let full = dataset.label_matrix();
    let labels = [0, 1, 2].map(|p| full.select_rows(&rows[p]));
    let tokens = dataset.documents().iter().map(|d| tokenize(&d.text)).collect();
    Ok(Prepared {
        dataset,
        split,
        tokens,
        rows,
        labels,
    })
}

/// Loads, preprocesses and splits the corpus described by `config`.
pub fn prepare_data(config: &PipelineConfig) -> Result<Prepared> {
    prepare(config, &mut Timer(Vec::new()))
}

fn seeded_representation(config: &PipelineConfig, rep: &Representation) -> Representation {
    rep.clone().with_seed(config.representation_seed())
}

fn seeded_classifier(config: &PipelineConfig, clf: &ClassifierConfig) -> ClassifierConfig {
    clf.with_seed(config.classifier_seed())
}

/// Fits on train, evaluates on validation and test once, and writes every
/// artifact of a finished run.
fn finish_run(
    config: &PipelineConfig,
    prepared: &Prepared,
    mut timer: Timer,
    tuning: Option<TuningSummary>,
) -> Result<RunReport> {
    let out = &config.out_dir;
    let mut artifacts = BTreeMap::new();
    let rep = seeded_representation(config, &config.representation);
    let (fitted, x) = timer.run("vectorize", || {
        let fitted = prepared.fit_representation(&rep)?;
        let x: Vec<FeatureMatrix> = Partition::ALL
            .iter()
            .map(|&p| prepared.features(&fitted, p))
            .collect::<Result<_>>()?;
        fitted.save(out.join("representation.json"))?;
        Ok((fitted, x))
    })?;
    artifacts.insert("representation".to_string(), out.join("representation.json"));

    let clf = seeded_classifier(config, &config.classifier);
    let model = timer.run("train", || {
        let m = clf.fit(&x[0], prepared.labels(Partition::Train), config.workers)?;
        m.save(&out.join("model.json"))?;
        Ok(m)
    })?;
    artifacts.insert("model".to_string(), out.join("model.json"));

    let vocab = prepared.dataset.vocabulary();
    let mut reports = Vec::new();
    for p in [Partition::Validation, Partition::Test] {
        let stage = if p == Partition::Test { "test" } else { "validate" };
        let report = timer.run(stage, || {
            let scores = model.predict_scores(&x[p.index()])?;
            let path = out.join(format!("predictions_{p}.csv"));
            write_predictions(&path, &prepared.ids(p), vocab, &scores)?;
            let pred = scores.threshold(config.threshold);
            let report = evaluate(prepared.labels(p), &pred, vocab, config.macro_scope)?;
            let class_path = out.join(format!("class_metrics_{p}.csv"));
            write_with(&class_path, |w| report.write_class_csv(w))?;
            Ok(report)
        })?;
        artifacts.insert(format!("predictions_{p}"), out.join(format!("predictions_{p}.csv")));
        artifacts.insert(format!("class_metrics_{p}"), out.join(format!("class_metrics_{p}.csv")));
        reports.push(report);
    }
    let test = reports.pop().expect("two partitions");
    let validation = reports.pop().expect("two partitions");
    for name in ["split", "empty_text", "rejections"] {
        artifacts.insert(name.to_string(), out.join(format!("{name}.csv")));
    }

    let mut snapshot = config.clone();
    snapshot.tune = None;
    let report = RunReport {
        version: REPORT_VERSION,
        config: snapshot,
        representation: fitted.name().to_string(),
        classifier: config.classifier.name().to_string(),
        feature_dim: fitted.dim(),
        split_sizes: prepared.split.sizes(),
        split_warnings: prepared.split.warnings.clone(),
        label_profile: frequency_profile(&prepared.dataset),
        validation,
        test,
        class_csv: out.join("class_metrics_test.csv"),
        timings: timer.0,
        artifacts,
        tuning,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let mut timer = Timer(Vec::new());
    let prepared = prepare(config, &mut timer)?;
    finish_run(config, &prepared, timer, None)
}

/// Validation F1_micro of one train/validate cycle. Never touches the test
/// partition.
pub fn validation_f1(
    prepared: &Prepared,
    fitted: &FittedRepresentation,
    classifier: &ClassifierConfig,
    threshold: f64,
    workers: usize,
) -> Result<f64> {
    let xtr = prepared.features(fitted, Partition::Train)?;
    let xva = prepared.features(fitted, Partition::Validation)?;
    let model = classifier.fit(&xtr, prepared.labels(Partition::Train), workers)?;
    let pred = model.predict(&xva, threshold)?;
    let vocab = prepared.dataset.vocabulary();
    Ok(evaluate(prepared.labels(Partition::Validation), &pred, vocab, Default::default())?.f1_micro)
}

struct TuningPlan<'a> {
    config: &'a PipelineConfig,
    rep_preset: Option<String>,
    clf_preset: String,
    space: SearchSpace,
}

impl TuningPlan<'_> {
    fn new(config: &PipelineConfig) -> Result<TuningPlan<'_>> {
        let tune = config
            .tune
            .as_ref()
            .ok_or_else(|| Error::Config("tuning needs a `tune` section".into()))?;
        let clf_space = preset(&tune.classifier)?;
        let space = match &tune.representation {
            Some(r) => SearchSpace::combine(&format!("{r}_{}", tune.classifier), &[preset(r)?, clf_space]),
            None => clf_space,
        };
        Ok(TuningPlan {
            config,
            rep_preset: tune.representation.clone(),
            clf_preset: tune.classifier.clone(),
            space,
        })
    }

    fn settings(&self, params: &Params) -> Result<(Representation, ClassifierConfig)> {
        match &self.rep_preset {
            Some(r) => Ok((
                representation_from_params(r, &self.config.representation, &sub_params(params, r))?,
                classifier_from_params(&self.clf_preset, &self.config.classifier, &sub_params(params, &self.clf_preset))?,
            )),
            None => Ok((
                self.config.representation.clone(),
                classifier_from_params(&self.clf_preset, &self.config.classifier, params)?,
            )),
        }
    }
}

/// Tunes on train/validation, then evaluates the single best configuration
/// once on test.
pub fn tune_pipeline(config: &PipelineConfig) -> Result<(StudyResult, RunReport)> {
    let mut timer = Timer(Vec::new());
    let plan = TuningPlan::new(config)?;
    let tune = config.tune.as_ref().expect("checked by the plan");
    let prepared = prepare(config, &mut timer)?;
    // a fixed representation is fitted once for every trial
    let fixed = match plan.rep_preset {
        None => Some(timer.run("vectorize", || {
            prepared.fit_representation(&seeded_representation(config, &config.representation))
        })?),
        Some(_) => None,
    };
    let inner_workers = if config.workers > 1 { 1 } else { config.workers };
    let objective = |params: &Params| -> Result<f64> {
        let (rep, clf) = plan.settings(params)?;
        let clf = seeded_classifier(config, &clf);
        match &fixed {
            Some(f) => validation_f1(&prepared, f, &clf, config.threshold, inner_workers),
            None => {
                let f = prepared.fit_representation(&seeded_representation(config, &rep))?;
                validation_f1(&prepared, &f, &clf, config.threshold, inner_workers)
            }
        }
    };
    let result = timer.run("tune", || {
        let mut study = Study::new(plan.space.clone(), config.tuner_seed(), Sampler::Tpe(tune.sampler))?
            .with_journal(&config.journal_path())?;
        study.optimize_parallel(tune.budget, config.workers, objective)?;
        let result = study.result()?;
        write_json(&config.out_dir.join("study.json"), &result)?;
        result.write_leaderboard(&config.out_dir.join("leaderboard.csv"), tune.leaderboard_top)?;
        Ok(result)
    })?;

    let (rep, clf) = plan.settings(&result.best.params)?;
    let mut best = config.clone();
    best.representation = rep;
    best.classifier = clf;
    let summary = TuningSummary {
        space: result.space.clone(),
        trials: result.trials.len(),
        failed_trials: result.trials.iter().filter(|t| t.objective.is_none()).count(),
        best_trial: result.best.id,
        best_validation_f1_micro: result.best.objective.expect("best trial is complete"),
        best_params: result.best.params.clone(),
    };
    let mut report = finish_run(&best, &prepared, timer, Some(summary))?;
    report.artifacts.insert("journal".into(), config.journal_path());
    report.artifacts.insert("study".into(), config.out_dir.join("study.json"));
    report.artifacts.insert("leaderboard".into(), config.out_dir.join("leaderboard.csv"));
    write_json(&config.out_dir.join(REPORT_FILE), &report)?;
    Ok((result, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub documents: usize,
    pub rejected_records: usize,
    pub empty_texts: usize,
    pub output: PathBuf,
}

/// Writes the normalized corpus as JSONL plus the rejection and empty-text
/// reports.
pub fn run_preprocess(config: &PipelineConfig) -> Result<PreprocessSummary> {
    config.validate()?;
    create_dir(&config.out_dir)?;
    let mut timer = Timer(Vec::new());
    let (raw, rejections) = load_stage(config, &mut timer)?;
    let (clean, empty_texts) = preprocess_stage(config, &raw, &mut timer)?;
    let output = config.out_dir.join("preprocessed.jsonl");
    clean.save(&output)?;
    Ok(PreprocessSummary {
        documents: clean.len(),
        rejected_records: rejections.records_skipped,
        empty_texts,
        output,
    })
}

pub fn run_split(config: &PipelineConfig) -> Result<SplitAssignment> {
    config.validate()?;
    create_dir(&config.out_dir)?;
    let mut timer = Timer(Vec::new());
    let (raw, _) = load_stage(config, &mut timer)?;
    let (clean, _) = preprocess_stage(config, &raw, &mut timer)?;
    split_stage(config, &clean, &mut timer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizeSummary {
    pub representation: String,
    pub dim: usize,
    pub rows: [usize; 3],
    pub sparse: bool,
    pub files: Vec<PathBuf>,
}

/// Fits the representation on train. Dense features are also written per
/// partition as EMB1 matrices with id files.
pub fn run_vectorize(config: &PipelineConfig) -> Result<VectorizeSummary> {
    let mut timer = Timer(Vec::new());
    let prepared = prepare(config, &mut timer)?;
    let out = &config.out_dir;
    timer.run("vectorize", || {
        let fitted = prepared.fit_representation(&seeded_representation(config, &config.representation))?;
        let path = out.join("representation.json");
        fitted.save(&path)?;
        let mut files = vec![path];
        let mut rows = [0; 3];
        let mut sparse = false;
        for p in Partition::ALL {
            let x = prepared.features(&fitted, p)?;
            rows[p.index()] = x.rows();
            sparse = x.is_sparse();
            if let FeatureMatrix::Dense(d) = x {
                let m = out.join(format!("features_{p}.emb"));
                let i = out.join(format!("features_{p}.ids"));
                let table = EmbeddingTable {
                    ids: prepared.ids(p).iter().map(|s| s.to_string()).collect(),
                    vectors: d,
                };
                write_embeddings(&m, &i, &table)?;
                files.push(m);
                files.push(i);
            }
        }
        Ok(VectorizeSummary {
            representation: fitted.name().to_string(),
            dim: fitted.dim(),
            rows,
            sparse,
            files,
        })
    })
}

/// Scores an external `id,code,score` file against the gold labels. With a
/// partition, the documents are that partition of the configured split;
/// otherwise they are the documents named in the file.
pub fn evaluate_predictions(
    config: &PipelineConfig,
    predictions: &Path,
    partition: Option<Partition>,
    threshold: f64,
) -> Result<MetricsReport> {
    if !predictions.is_file() {
        return Err(Error::MissingArtifact(predictions.to_path_buf()));
    }
    let vocab = load_vocabulary(config)?;
    let (ds, _) = load_dataset(&config.dataset, vocab, config.unknown_codes)?;
    let ids: Vec<String> = match partition {
        Some(p) => {
            let split = match &config.split.file {
                Some(f) => SplitAssignment::load(f)?,
                None => split_dataset(&ds, config.split.ratios, config.split_seed())?,
            };
            let rows = split.dataset_rows(&ds)?;
            rows[p.index()].iter().map(|&i| ds.documents()[i].id.clone()).collect()
        }
        None => prediction_ids(predictions)?,
    };
    let index: BTreeMap<&str, usize> = ds.documents().iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let missing: Vec<String> = ids.iter().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::Alignment {
            missing: Vec::new(),
            extra: missing,
        });
    }
    let rows: Vec<usize> = ids.iter().map(|id| index[id.as_str()]).collect();
    let truth = ds.label_matrix().select_rows(&rows);
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let scores = read_predictions(predictions, &id_refs, ds.vocabulary())?;
    evaluate(&truth, &scores.threshold(threshold), ds.vocabulary(), config.macro_scope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub dataset: PathBuf,
    pub vocabulary: PathBuf,
    pub oracle_matrix: PathBuf,
    pub oracle_ids: PathBuf,
    pub config: PathBuf,
}

/// Writes a synthetic corpus, its vocabulary, the oracle embeddings and a
/// starter config that points at them.
pub fn run_synth(spec: &SyntheticSpec, out_dir: &Path) -> Result<SynthOutput> {
    create_dir(out_dir)?;
    let corpus = generate_synthetic_corpus(spec)?;
    let out = SynthOutput {
        dataset: out_dir.join("dataset.jsonl"),
        vocabulary: out_dir.join("vocabulary.csv"),
        oracle_matrix: out_dir.join("oracle.emb"),
        oracle_ids: out_dir.join("oracle.ids"),
        config: out_dir.join("config.json"),
    };
    corpus.dataset.save(&out.dataset)?;
    write_with(&out.vocabulary, |w| corpus.dataset.vocabulary().write_csv(w))?;
    let table = EmbeddingTable {
        ids: corpus.dataset.documents().iter().map(|d| d.id.clone()).collect(),
        vectors: corpus.oracle.clone(),
    };
    write_embeddings(&out.oracle_matrix, &out.oracle_ids, &table)?;
    let mut config = PipelineConfig::new("dataset.jsonl", "run");
    config.vocabulary = Some(PathBuf::from("vocabulary.csv"));
    config.seed = spec.seed;
    std::fs::write(&out.config, config.to_json()?).map_err(|e| Error::io(&out.config, e))?;
    Ok(out)
}

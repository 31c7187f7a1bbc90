use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use icd_coder::corpus::SyntheticSpec;
use icd_coder::pipeline::{self, PipelineConfig, TuneConfig};
use icd_coder::splitter::Partition;
use icd_coder::{Error, ErrorKind, Result};

/// Multi-label ICD coding of clinical text.
///
/// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
#[derive(Parser)]
#[command(name = "icd-coder", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides the config and ICD_CODER_SEED.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Decision threshold on label scores (inclusive).
    #[arg(long, global = true, value_name = "X")]
    threshold: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads. For `tune`, more than one runs trials in parallel
    /// batches, which changes the suggestion sequence relative to a
    /// single-worker study.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize the corpus text and write it as JSONL.
    Preprocess,
    /// Write the stratified train/validation/test split.
    Split,
    /// Fit the representation on train and write it with dense features.
    Vectorize,
    /// Run the full pipeline: fit, validate and test once.
    Train,
    /// Score an `id,code,score` predictions file against the gold labels.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        predictions: PathBuf,
        /// Restrict to one partition of the configured split.
        #[arg(long)]
        partition: Option<Partition>,
    },
    /// Search hyperparameters on validation, then test the best once.
    Tune {
        /// Number of trials; overrides the config.
        #[arg(long)]
        budget: Option<usize>,
        /// Classifier preset (random_forest, xgboost, mlp).
        #[arg(long)]
        classifier: Option<String>,
        /// Representation preset to search jointly.
        #[arg(long)]
        representation: Option<String>,
    },
    /// Write summary, per-class, frequency and table files for a run.
    Report {
        /// Run directory; defaults to --out or the config's out_dir.
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with oracle embeddings and a config.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        docs: usize,
        #[arg(long, default_value_t = 85)]
        labels: usize,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 1.1)]
        zipf: f64,
    },
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config PATH".into()))?;
    let mut c = PipelineConfig::load(path)?;
    c.apply_env()?;
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(t) = g.threshold {
        c.threshold = t;
    }
    if let Some(o) = &g.out {
        c.out_dir = o.clone();
    }
    if let Some(w) = g.workers {
        c.workers = w;
    }
    Ok(c)
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_metrics(dir: &Path, report: &icd_coder::metrics::MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("evaluation.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("evaluation_classes.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    report.write_class_csv(std::io::BufWriter::new(f))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth { docs, labels, noise, zipf } => {
            let spec = SyntheticSpec {
                n_documents: docs,
                n_labels: labels,
                paraphrase_noise: noise,
                zipf_exponent: zipf,
                seed: g.seed.unwrap_or(SyntheticSpec::default().seed),
                ..SyntheticSpec::default()
            };
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
            print(&pipeline::run_synth(&spec, &out)?)
        }
        Command::Preprocess => print(&pipeline::run_preprocess(&load_config(g)?)?),
        Command::Split => {
            let split = pipeline::run_split(&load_config(g)?)?;
            print(&serde_json::json!({ "sizes": split.sizes(), "warnings": split.warnings }))
        }
        Command::Vectorize => print(&pipeline::run_vectorize(&load_config(g)?)?),
        Command::Train => {
            let r = pipeline::run_pipeline(&load_config(g)?)?;
            print(&serde_json::json!({
                "validation": pipeline::Headline::from(&r.validation),
                "test": pipeline::Headline::from(&r.test),
                "out_dir": r.config.out_dir,
            }))
        }
        Command::Evaluate { predictions, partition } => {
            let c = load_config(g)?;
            let report = pipeline::evaluate_predictions(&c, &predictions, partition, c.threshold)?;
            write_metrics(&c.out_dir, &report)?;
            print(&report.summary())
        }
        Command::Tune {
            budget,
            classifier,
            representation,
        } => {
            let mut c = load_config(g)?;
            if c.tune.is_none() {
                let classifier = classifier
                    .clone()
                    .ok_or_else(|| Error::Config("no `tune` section in the config; pass --classifier".into()))?;
                c.tune = Some(TuneConfig {
                    representation: None,
                    classifier,
                    budget: 20,
                    sampler: Default::default(),
                    journal: None,
                    leaderboard_top: 5,
                });
            }
            let t = c.tune.as_mut().expect("set above");
            if let Some(b) = budget {
                t.budget = b;
            }
            if let Some(cl) = classifier {
                t.classifier = cl;
            }
            if representation.is_some() {
                t.representation = representation;
            }
            let (study, r) = pipeline::tune_pipeline(&c)?;
            print(&serde_json::json!({
                "trials": study.trials.len(),
                "best_trial": study.best.id,
                "best_validation_f1_micro": study.best.objective,
                "best_params": study.best.params,
                "test": pipeline::Headline::from(&r.test),
            }))
        }
        Command::Report { run } => {
            let dir = match (run, &g.out) {
                (Some(r), _) => r,
                (None, Some(o)) => o.clone(),
                (None, None) => load_config(g)?.out_dir,
            };
            let files = pipeline::report(&dir)?;
            print!("{}", std::fs::read_to_string(&files.table).map_err(|e| Error::io(&files.table, e))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}

//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL`
//! line; run with `--nocapture` to see them.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::prelude::*;

use icd_coder::classifiers::{fit_gradient_boosting, BoostParams, ClassifierConfig, ForestParams, Mlp, MlpParams};
use icd_coder::corpus::{generate_synthetic_corpus, LabelVocabulary, SyntheticSpec};
use icd_coder::matrix::{DenseMatrix, FeatureMatrix, LabelMatrix};
use icd_coder::metrics::{evaluate, MacroScope};
use icd_coder::pipeline::{run_pipeline, run_synth, PipelineConfig, RunReport, SynthOutput};
use icd_coder::rng;
use icd_coder::splitter::{split_dataset, Partition, SplitRatios};
use icd_coder::tuner::{run_study, Dimension, Params, Sampler, SearchSpace};
use icd_coder::vectorize::{fit_bow, fit_lda, fit_lsa, fit_tfidf, LdaParams, LsaParams, Representation, TermFilter};

fn verdict(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

// ---------------------------------------------------------------- metrics

struct Scores {
    micro: [f64; 3],
    macro_: [f64; 3],
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Visits every cell one at a time.
fn cell_loop(truth: &[Vec<u8>], pred: &[Vec<u8>], labels: usize) -> Scores {
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    let mut per = [0.0; 3];
    for l in 0..labels {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..truth.len() {
            match (truth[i][l], pred[i][l]) {
                (1, 1) => tp += 1.0,
                (0, 1) => fp += 1.0,
                (1, 0) => fn_ += 1.0,
                _ => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let p = safe_div(tp, tp + fp);
        let r = safe_div(tp, tp + fn_);
        per[0] += p;
        per[1] += r;
        per[2] += harmonic(p, r);
    }
    let p = safe_div(tp_all, tp_all + fp_all);
    let r = safe_div(tp_all, tp_all + fn_all);
    let n = labels as f64;
    Scores {
        micro: [p, r, harmonic(p, r)],
        macro_: [per[0] / n, per[1] / n, per[2] / n],
    }
}

#[test]
fn metric_oracle_equivalence() {
    let labels = 85;
    let codes: Vec<String> = (0..labels).map(|i| format!("C{i:02}")).collect();
    let vocab = LabelVocabulary::from_codes(&codes).unwrap();
    let mut r = rng::seeded(20_240_601);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for pair in 0..200 {
        let docs = r.gen_range(1..=1000);
        let (pt, pp) = match pair % 4 {
            0 => (0.0, r.gen_range(0.0..0.2)),
            1 => (r.gen_range(0.0..0.2), 0.0),
            _ => (r.gen_range(0.0..0.3), r.gen_range(0.0..0.3)),
        };
        let mut draw = |p: f64| -> Vec<Vec<u8>> {
            (0..docs)
                .map(|_| (0..labels).map(|_| u8::from(r.gen_bool(p))).collect())
                .collect()
        };
        let truth = draw(pt);
        let pred = draw(pp);
        let report = evaluate(
            &LabelMatrix::from_rows(&truth).unwrap(),
            &LabelMatrix::from_rows(&pred).unwrap(),
            &vocab,
            MacroScope::All,
        )
        .unwrap();
        let o = cell_loop(&truth, &pred, labels);
        let got = [
            report.precision_micro,
            report.recall_micro,
            report.f1_micro,
            report.precision_macro,
            report.recall_macro,
            report.f1_macro,
        ];
        let want = [o.micro[0], o.micro[1], o.micro[2], o.macro_[0], o.macro_[1], o.macro_[2]];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "metric oracle equivalence",
        worst <= 1e-12 && secs < 10.0,
        format!("max abs diff {worst:.2e} over 200 pairs in {secs:.2}s"),
    );
}

// ---------------------------------------------------------------- tf-idf

#[test]
fn tfidf_exactness() {
    let docs: Vec<Vec<&str>> = vec![
        vec!["ansiedad", "paciente", "ansiedad", "insomnio"],
        vec!["paciente", "depresión", "leve"],
        vec!["insomnio", "crónico", "paciente", "insomnio", "insomnio"],
        vec!["depresión", "grave", "ansiedad"],
        vec!["leve", "leve", "crónico"],
    ];
    let v = fit_tfidf(&docs, TermFilter::default()).unwrap();
    let FeatureMatrix::Sparse(m) = v.transform(&docs) else {
        panic!("tf-idf should be sparse");
    };
    let n = docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for d in &docs {
        let mut seen: Vec<&str> = d.clone();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let mut worst: f64 = 0.0;
    for (i, d) in docs.iter().enumerate() {
        let mut w: HashMap<&str, f64> = HashMap::new();
        for t in d {
            *w.entry(t).or_default() += 1.0;
        }
        for (t, x) in w.iter_mut() {
            *x *= ((1.0 + n) / (1.0 + df[t])).ln() + 1.0;
        }
        let norm = w.values().map(|x| x * x).sum::<f64>().sqrt();
        for (t, x) in &w {
            let col = v.vocabulary.column(t).expect("token in vocabulary");
            worst = worst.max((m.get(i, col) - x / norm).abs());
        }
        let stored = m.row(i).0.len();
        worst = worst.max((stored as f64 - w.len() as f64).abs());
    }
    verdict("tf-idf exactness", worst <= 1e-12, format!("max abs diff {worst:.2e}"));
}

// ---------------------------------------------------------------- lsa

#[test]
fn lsa_fidelity() {
    let mut r = rng::seeded(5);
    let mut worst: f64 = 0.0;
    for (rows, cols) in [(50, 40), (100, 100)] {
        let data: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = FeatureMatrix::Dense(DenseMatrix::from_vec(rows, cols, data.clone()).unwrap());
        let model = fit_lsa(
            &x,
            &LsaParams {
                n_components: 10,
                ..LsaParams::default()
            },
        )
        .unwrap();
        let mut oracle: Vec<f64> = nalgebra::DMatrix::from_row_slice(rows, cols, &data)
            .singular_values()
            .iter()
            .copied()
            .collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in model.singular_values.iter().zip(&oracle[..10]) {
            worst = worst.max((got - want).abs() / want);
        }
    }
    verdict("lsa fidelity", worst <= 1e-6, format!("max relative diff {worst:.2e}"));
}

// ---------------------------------------------------------------- lda

#[test]
fn lda_sanity() {
    let mut r = rng::seeded(42);
    let docs: Vec<Vec<String>> = (0..200)
        .map(|i| {
            let block = if i < 100 { "a" } else { "b" };
            (0..40).map(|_| format!("{block}{}", r.gen_range(0..20))).collect()
        })
        .collect();
    let bow = fit_bow(&docs, TermFilter::default()).unwrap();
    let counts = bow.transform(&docs);
    let model = fit_lda(
        &counts,
        &LdaParams {
            n_topics: 2,
            max_iter: 20,
            ..LdaParams::default()
        },
    )
    .unwrap();
    let theta = model.infer(&counts).unwrap().proportions.to_dense();
    let phi = model.topic_word();
    let mut worst_sum: f64 = 0.0;
    for m in [&theta, &phi] {
        for i in 0..m.rows() {
            worst_sum = worst_sum.max((m.row(i).iter().sum::<f64>() - 1.0).abs());
        }
    }
    let dominant: Vec<usize> = (0..theta.rows())
        .map(|i| if theta.get(i, 0) >= theta.get(i, 1) { 0 } else { 1 })
        .collect();
    let same = (0..200).filter(|&i| dominant[i] == usize::from(i >= 100)).count();
    let agreement = same.max(200 - same) as f64 / 200.0;
    verdict(
        "lda sanity",
        agreement >= 0.9 && worst_sum <= 1e-9,
        format!("block agreement {agreement:.3}, max row-sum error {worst_sum:.2e}"),
    );
}

// ---------------------------------------------------------------- splitter

#[test]
fn split_stratification() {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::default()).unwrap();
    let ds = &corpus.dataset;
    let ratios = SplitRatios::default();
    let split = split_dataset(ds, ratios, 11).unwrap();
    let again = split_dataset(ds, ratios, 11).unwrap();
    let rows = split.dataset_rows(ds).unwrap();
    let labels = ds.vocabulary().len();
    let mut totals = vec![0usize; labels];
    let mut per = vec![[0usize; 3]; labels];
    for p in Partition::ALL {
        for &i in &rows[p.index()] {
            for code in &ds.documents()[i].codes {
                let l = ds.vocabulary().position(code).unwrap();
                totals[l] += 1;
                per[l][p.index()] += 1;
            }
        }
    }
    let mut checked = 0;
    let mut misses = Vec::new();
    for l in 0..labels {
        if totals[l] < 2 {
            continue;
        }
        checked += 1;
        for p in Partition::ALL {
            let target = ratios.0[p.index()] * totals[l] as f64;
            let gap = (per[l][p.index()] as f64 - target).abs();
            if gap > 1.0f64.max(0.1 * target) {
                misses.push((ds.vocabulary().code(l).to_string(), p, per[l][p.index()], target));
            }
        }
    }
    verdict(
        "split stratification",
        misses.is_empty() && split == again && checked > 0,
        format!("{checked} labels checked, {} misses {misses:?}, deterministic {}", misses.len(), split == again),
    );
}

// ---------------------------------------------------------------- mlp

fn bce(z: f64, y: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z).exp());
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean cross-entropy of a 3-4-2 ReLU network, weights laid out per layer
/// as an input-major matrix followed by the biases.
fn small_net_loss(w: &[f64], x: &[[f64; 3]], y: &[[f64; 2]]) -> f64 {
    let (w1, b1, w2, b2) = (&w[0..12], &w[12..16], &w[16..24], &w[24..26]);
    let mut total = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let h: Vec<f64> = (0..4)
            .map(|o| (b1[o] + (0..3).map(|j| xi[j] * w1[j * 4 + o]).sum::<f64>()).max(0.0))
            .collect();
        for o in 0..2 {
            let z = b2[o] + (0..4).map(|j| h[j] * w2[j * 2 + o]).sum::<f64>();
            total += bce(z, yi[o]);
        }
    }
    total / (x.len() * 2) as f64
}

#[test]
fn mlp_gradient_check() {
    let params = MlpParams {
        hidden_layers: vec![4],
        dropout: 0.0,
        seed: 3,
        ..MlpParams::default()
    };
    let mut net = Mlp::new(3, 2, &params).unwrap();
    let mut r = rng::seeded(9);
    for w in net.weights.iter_mut() {
        *w = r.gen_range(-1.0..1.0);
    }
    let x = [[0.5, -1.2, 2.0], [1.5, 0.3, -0.7], [-0.4, 0.9, 0.1], [2.2, -0.5, 1.1], [0.0, 1.0, -1.5]];
    let y = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]];
    let xm = FeatureMatrix::Dense(DenseMatrix::from_rows(&x.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap());
    let ym = LabelMatrix::from_rows(&y.iter().map(|r| r.iter().map(|&v| v as u8).collect()).collect::<Vec<_>>()).unwrap();
    let rows: Vec<usize> = (0..x.len()).collect();
    let (loss, grad) = net.loss_and_gradient(&xm, &ym, &rows);
    let loss_gap = (loss - small_net_loss(&net.weights, &x, &y)).abs();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..net.weights.len() {
        let mut plus = net.weights.clone();
        plus[k] += h;
        let mut minus = net.weights.clone();
        minus[k] -= h;
        let fd = (small_net_loss(&plus, &x, &y) - small_net_loss(&minus, &x, &y)) / (2.0 * h);
        let rel = (grad[k] - fd).abs() / (grad[k].abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    verdict(
        "mlp gradient check",
        worst <= 1e-4 && loss_gap <= 1e-12 && net.weights.len() == 26,
        format!("max relative error {worst:.2e} over {} parameters, loss gap {loss_gap:.1e}", net.weights.len()),
    );
}

// ---------------------------------------------------------------- boosting

#[test]
fn boosting_correctness() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys = [0u8, 1, 1, 1];
    let lambda = 1.0;
    let x = FeatureMatrix::Dense(DenseMatrix::from_rows(&xs.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap());
    let y = LabelMatrix::from_rows(&ys.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
    let m = fit_gradient_boosting(
        &x,
        &y,
        &BoostParams {
            n_estimators: 1,
            max_depth: 1,
            min_child_weight: 0.0,
            reg_lambda: lambda,
            ..BoostParams::default()
        },
        1,
    )
    .unwrap();
    // margin 0 everywhere: p = 0.5, g = p - y, h = p (1 - p)
    let g: Vec<f64> = ys.iter().map(|&v| 0.5 - f64::from(v)).collect();
    let h = [0.25; 4];
    let score = |a: usize, b: usize| {
        let gs: f64 = g[a..b].iter().sum();
        let hs: f64 = h[a..b].iter().sum();
        gs * gs / (hs + lambda)
    };
    let cut = (1..4).max_by(|&a, &b| (score(0, a) + score(a, 4)).total_cmp(&(score(0, b) + score(b, 4)))).unwrap();
    let weight = |a: usize, b: usize| -g[a..b].iter().sum::<f64>() / (h[a..b].iter().sum::<f64>() + lambda);
    let want = [weight(0, cut), weight(cut, 4)];
    let got = m.labels[0].trees[0].leaf_weights();
    let leaf_gap = if got.len() == 2 {
        (got[0] - want[0]).abs().max((got[1] - want[1]).abs())
    } else {
        f64::INFINITY
    };

    let mut r = rng::seeded(17);
    let rows: Vec<Vec<f64>> = (0..80).map(|_| (0..5).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    let labels: Vec<Vec<u8>> = rows
        .iter()
        .map(|v| vec![u8::from(v[0] + v[1] > 0.0), u8::from(v[2] * v[3] > 0.3), u8::from(r.gen_bool(0.3))])
        .collect();
    let fit = fit_gradient_boosting(
        &FeatureMatrix::Dense(DenseMatrix::from_rows(&rows).unwrap()),
        &LabelMatrix::from_rows(&labels).unwrap(),
        &BoostParams {
            n_estimators: 40,
            max_depth: 3,
            subsample: 1.0,
            colsample_bytree: 1.0,
            gamma: 0.0,
            ..BoostParams::default()
        },
        1,
    )
    .unwrap();
    let worst_rise = fit
        .labels
        .iter()
        .flat_map(|b| b.training_loss.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        "boosting correctness",
        leaf_gap <= 1e-9 && worst_rise <= 0.0,
        format!("leaf weights {got:?} vs {want:?}, largest per-round loss change {worst_rise:.2e}"),
    );
}

// ---------------------------------------------------------------- tpe

#[test]
fn tpe_effectiveness() {
    let space = SearchSpace::new(
        "sphere",
        vec![Dimension::float("x", -5.0, 5.0), Dimension::float("y", -5.0, 5.0)],
    );
    let f = |p: &Params| -> icd_coder::Result<f64> {
        let x = p["x"].as_f64().unwrap();
        let y = p["y"].as_f64().unwrap();
        Ok(-(x - 3.0).powi(2) - (y + 1.0).powi(2))
    };
    let median = |sampler: Sampler| {
        let mut best: Vec<f64> = (0..20u64)
            .map(|seed| run_study(f, &space, 60, seed, &sampler).unwrap().best.objective.unwrap())
            .collect();
        best.sort_by(f64::total_cmp);
        (best[9] + best[10]) / 2.0
    };
    let tpe = median(Sampler::Tpe(Default::default()));
    let random = median(Sampler::Random);
    verdict(
        "tpe effectiveness",
        tpe > random,
        format!("median best {tpe:.5} (tpe) vs {random:.5} (random)"),
    );
}

// ---------------------------------------------------------------- end to end

fn synthetic(dir: &Path, docs: usize) -> SynthOutput {
    let spec = SyntheticSpec {
        n_documents: docs,
        n_labels: 85,
        paraphrase_noise: 0.2,
        ..SyntheticSpec::default()
    };
    run_synth(&spec, &dir.join("data")).unwrap()
}

fn configure(data: &SynthOutput, out: &Path, representation: Representation, classifier: ClassifierConfig) -> PipelineConfig {
    let mut c = PipelineConfig::load(&data.config).unwrap();
    c.out_dir = out.to_path_buf();
    c.representation = representation;
    c.classifier = classifier;
    c
}

fn same_outcome(a: &RunReport, b: &RunReport) -> bool {
    let files = ["predictions_validation.csv", "predictions_test.csv", "model.json", "split.csv"];
    a.validation == b.validation
        && a.test == b.test
        && a.split_sizes == b.split_sizes
        && a.feature_dim == b.feature_dim
        && files.iter().all(|f| {
            std::fs::read(a.config.out_dir.join(f)).unwrap() == std::fs::read(b.config.out_dir.join(f)).unwrap()
        })
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 10_000);
    let mlp = ClassifierConfig::Mlp(MlpParams::default());
    let first = configure(&data, &tmp.path().join("first"), Representation::default(), mlp.clone());
    let second = configure(&data, &tmp.path().join("second"), Representation::default(), mlp);
    let start = Instant::now();
    let a = run_pipeline(&first).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let b = run_pipeline(&second).unwrap();
    let identical = same_outcome(&a, &b);
    verdict(
        "end-to-end pipeline",
        a.test.f1_micro >= 0.90 && secs < 300.0 && identical,
        format!("test F1_micro {:.4} in {secs:.1}s, reruns identical {identical}", a.test.f1_micro),
    );
}

#[test]
fn directional_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 10_000);
    let oracle = Representation::Embeddings {
        matrix: data.oracle_matrix.clone(),
        ids: data.oracle_ids.clone(),
    };
    let boost = ClassifierConfig::GradientBoosting(BoostParams {
        n_estimators: 40,
        max_depth: 4,
        ..BoostParams::default()
    });
    let bow = Representation::Bow {
        filter: TermFilter::default(),
    };
    let forest = ClassifierConfig::RandomForest(ForestParams::default());
    let dense = run_pipeline(&configure(&data, &tmp.path().join("oracle"), oracle, boost)).unwrap();
    let rf = run_pipeline(&configure(&data, &tmp.path().join("bow"), bow, forest)).unwrap();
    verdict(
        "directional ranking",
        dense.test.f1_micro >= rf.test.f1_micro && rf.test.precision_micro >= rf.test.recall_micro,
        format!(
            "oracle+boosting F1 {:.4}, bow+forest F1 {:.4} (P {:.4}, R {:.4})",
            dense.test.f1_micro, rf.test.f1_micro, rf.test.precision_micro, rf.test.recall_micro
        ),
    );
}

fn variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

#[test]
fn rare_labels_vary_more_across_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 2_000);
    let mut f1: Vec<Vec<f64>> = Vec::new();
    let mut positives = Vec::new();
    // a forest: the default MLP never predicts labels this rare, so their F1
    // would be a constant 0
    for seed in 0..10u64 {
        let mut c = configure(
            &data,
            &tmp.path().join(format!("seed{seed}")),
            Representation::default(),
            ClassifierConfig::RandomForest(ForestParams::default()),
        );
        c.seed = seed;
        let r = run_pipeline(&c).unwrap();
        if f1.is_empty() {
            f1 = vec![Vec::new(); r.test.classes.len()];
            let counts: HashMap<&str, usize> = r
                .label_profile
                .codes
                .iter()
                .map(String::as_str)
                .zip(r.label_profile.counts.iter().copied())
                .collect();
            positives = r.test.classes.iter().map(|c| counts.get(c.code.as_str()).copied().unwrap_or(0)).collect();
        }
        for (l, row) in r.test.classes.iter().enumerate() {
            f1[l].push(row.f1);
        }
    }
    let rare: Vec<usize> = (0..f1.len()).filter(|&l| positives[l] >= 1 && positives[l] <= 5).collect();
    let mut by_freq: Vec<usize> = (0..f1.len()).collect();
    by_freq.sort_by(|&a, &b| positives[b].cmp(&positives[a]).then(a.cmp(&b)));
    let top = &by_freq[..10];
    let mean_var = |ls: &[usize]| ls.iter().map(|&l| variance(&f1[l])).sum::<f64>() / ls.len().max(1) as f64;
    let (rare_var, top_var) = (mean_var(&rare), mean_var(top));
    verdict(
        "rare-label variance",
        !rare.is_empty() && rare_var > top_var,
        format!(
            "{} rare labels, mean F1 variance {rare_var:.5} vs {top_var:.5} for the 10 most frequent",
            rare.len()
        ),
    );
}

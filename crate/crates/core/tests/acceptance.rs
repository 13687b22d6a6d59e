//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::qp::{kkt_clean, oracle_gap, random_instance};
use common::tasks::{
    desk, four_corpora, four_corpora_spec, identical_pair, mean_shift_pair, mean_shift_spec,
};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use ser_adapt::adversarial::{Discriminator, DiscriminatorConfig};
use ser_adapt::autoencoder::{train_autoencoder, Autoencoder};
use ser_adapt::corpus::{map_valence, Valence, ValenceRegistry};
use ser_adapt::eval::{
    aggregate_utterance, check_disjoint, run_baseline, run_cross_lingual, run_multilingual,
    target_reads_before_scoring, trace_adaptation, uar, EvalReport, ExperimentOutcome,
    FeatureCondition,
};
use ser_adapt::nn::{grad_check_chain, Activation, DenseNet, ScalarLoss, SquaredError};
use ser_adapt::rng::{derived, seeded};

/// Verdict plus a one-line summary of the measured values.
type Verdict = (bool, String);

/// Outcomes of every experiment run by the suite, audited by criterion 8.
#[derive(Default)]
struct Ledger {
    outcomes: Vec<(String, ExperimentOutcome)>,
}

fn uar_of(o: &ExperimentOutcome, condition: FeatureCondition) -> f64 {
    report_of(o, condition).mean_uar
}

fn report_of(o: &ExperimentOutcome, condition: FeatureCondition) -> &EvalReport {
    o.reports
        .iter()
        .find(|r| r.descriptor.condition == condition)
        .expect("condition was requested")
}

/// `mean(log(1 - D))` over the batch: the encoder's adversarial objective.
struct AdversarialObjective;

impl ScalarLoss for AdversarialObjective {
    fn value(&self, output: ArrayView2<f64>) -> f64 {
        output.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / output.len() as f64
    }

    fn gradient(&self, output: ArrayView2<f64>) -> Array2<f64> {
        let n = output.len() as f64;
        output.mapv(|p| -1.0 / ((1.0 - p) * n))
    }

    fn difference(&self, plus: ArrayView2<f64>, minus: ArrayView2<f64>) -> f64 {
        let n = plus.len() as f64;
        plus.iter()
            .zip(minus.iter())
            .map(|(p, m)| ((m - p) / (1.0 - m)).ln_1p())
            .sum::<f64>()
            / n
    }
}

fn gradient_correctness() -> Verdict {
    const ACTS: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Linear];
    let mut rng = seeded(1);
    let mut worst = 0.0f64;
    let mut used = BTreeSet::new();
    let shapes = 24;
    for i in 0..shapes {
        let depth = 1 + i % 3;
        let mut dims = vec![rng.random_range(1..=96usize)];
        // keep the largest nets small enough to finish quickly
        let cap = if depth == 3 { 48 } else { 96 };
        for _ in 0..depth {
            dims.push(rng.random_range(1..=cap));
        }
        if i == 0 {
            dims = vec![96, 96];
        }
        let acts: Vec<Activation> = (0..depth).map(|l| ACTS[(i + l) % 3]).collect();
        used.extend(acts.iter().map(|a| format!("{a:?}")));
        let dropout_after = (0..depth - 1).collect();
        let net = DenseNet::glorot(&dims, &acts, 0.5, dropout_after, &mut rng).unwrap();
        let input = Array2::from_shape_fn((3, dims[0]), |_| rng.sample::<f64, _>(StandardNormal));
        let target = Array2::from_shape_fn((3, *dims.last().unwrap()), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let err = grad_check_chain(
            std::slice::from_ref(&net),
            &SquaredError { target },
            input.view(),
            1e-5,
        )
        .unwrap();
        worst = worst.max(err);
    }
    // discriminator stacked on an encoder, gradients reaching the encoder weights
    let encoder = DenseNet::glorot(
        &[20, 16, 12],
        &[Activation::Relu, Activation::Linear],
        0.5,
        [0].into(),
        &mut rng,
    )
    .unwrap();
    let disc = Discriminator::new(
        12,
        &DiscriminatorConfig {
            hidden: vec![24, 16],
            dropout_rate: 0.5,
        },
        &mut rng,
    )
    .unwrap();
    let input = Array2::from_shape_fn((4, 20), |_| rng.sample::<f64, _>(StandardNormal));
    let composed = grad_check_chain(
        &[encoder, disc.net().clone()],
        &AdversarialObjective,
        input.view(),
        1e-5,
    )
    .unwrap();
    worst = worst.max(composed);
    (
        worst < 1e-4 && used.len() == 3,
        format!("{shapes} nets + encoder→discriminator, max relative error {worst:.2e} (composed {composed:.2e})"),
    )
}

fn smo_oracle() -> Verdict {
    let mut worst = 0.0f64;
    let mut kkt_failures = 0;
    for seed in 0..50 {
        worst = worst.max(oracle_gap(seed));
        if !kkt_clean(&random_instance(&mut seeded(seed)), 1e-3) {
            kkt_failures += 1;
        }
    }
    (
        worst < 1e-3 && kkt_failures == 0,
        format!("50 instances, max decision gap {worst:.2e}, KKT failures {kkt_failures}"),
    )
}

/// Corpus, negative emotions, positive emotions.
const VALENCE_TABLE: [(&str, &[&str], &[&str]); 4] = [
    (
        "EMO-DB",
        &["Anger", "Sadness", "Fear", "Disgust", "Boredom"],
        &["Neutral", "Happiness"],
    ),
    (
        "SAVEE",
        &["Anger", "Sadness", "Fear", "Disgust"],
        &["Neutral", "Happiness", "Surprise"],
    ),
    (
        "EMOVO",
        &["Anger", "Sadness", "Fear", "Disgust"],
        &["Neutral", "Joy", "Surprise"],
    ),
    ("URDU", &["Angry", "Sad"], &["Neutral", "Happy"]),
];

fn metric_units() -> Verdict {
    use Valence::{Negative as N, Positive as P};
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    check(uar(&[N, P, P, N], &[N, P, P, N]).unwrap() == 1.0, "perfect");
    // recall(pos) = 4/5, recall(neg) = 3/5
    let truth = [vec![P; 5], vec![N; 5]].concat();
    let pred = [vec![P, P, P, P, N], vec![N, N, N, P, P]].concat();
    check(
        (uar(&truth, &pred).unwrap() - 0.7).abs() < 1e-12,
        "0.8/0.6 recalls",
    );
    let truth = [vec![P; 90], vec![N; 10]].concat();
    check(
        uar(&truth, &[P; 100]).unwrap() == 0.5,
        "all-positive predictor",
    );
    check(uar(&[P, P], &[P, N]).is_err(), "missing class");
    let (p, v) = aggregate_utterance(&[0.9, 0.2, 0.7]).unwrap();
    check((p - 0.6).abs() < 1e-12 && v == P, "[0.9, 0.2, 0.7]");
    check(aggregate_utterance(&[0.5]).unwrap() == (0.5, N), "tie");
    check(
        aggregate_utterance(&[0.3]).unwrap() == (0.3, N),
        "single segment",
    );
    check(aggregate_utterance(&[]).is_err(), "empty");

    let registry = ValenceRegistry::table_one();
    let mut pairs = 0;
    for (corpus, negative, positive) in VALENCE_TABLE {
        let scheme = registry.scheme(corpus).unwrap();
        check(scheme.emotions(N) == negative, corpus);
        check(scheme.emotions(P) == positive, corpus);
        for (emotions, valence) in [(negative, N), (positive, P)] {
            for e in emotions {
                pairs += 1;
                check(
                    map_valence(corpus, e).ok() == Some(valence),
                    &format!("{corpus}/{e}"),
                );
            }
        }
    }
    (
        failures.is_empty(),
        format!("metric examples and {pairs} (corpus, emotion) pairs; mismatches {failures:?}"),
    )
}

fn autoencoder_convergence() -> Verdict {
    let mut rng = seeded(4);
    let factors = Array2::from_shape_fn((600, 5), |_| rng.sample::<f64, _>(StandardNormal));
    let loadings = Array2::from_shape_fn((5, 88), |_| {
        rng.sample::<f64, _>(StandardNormal) / 5f64.sqrt()
    });
    let data = factors.dot(&loadings);
    let cfg = desk(0);
    let ae = Autoencoder::new(&cfg.autoencoder, &mut derived(4, "init")).unwrap();
    let (_, hist) = train_autoencoder(
        ae,
        data.view(),
        &cfg.autoencoder_training,
        &mut derived(4, "train"),
    )
    .unwrap();
    let ratio = hist.final_loss() / hist.initial_loss;
    (
        ratio < 0.2 && hist.epoch_losses.len() <= 50,
        format!(
            "rank-5 data, loss {:.4} → {:.4} after {} epochs (ratio {ratio:.3})",
            hist.initial_loss,
            hist.final_loss(),
            hist.epoch_losses.len()
        ),
    )
}

fn adversarial_equilibrium() -> Verdict {
    let (s, t) = identical_pair(0);
    let same = trace_adaptation(&s, &t, &desk(0), false).unwrap();
    let same_post = same.history.final_probe_accuracy().unwrap();
    let (s, t) = mean_shift_pair(0);
    let shifted = trace_adaptation(&s, &t, &desk(0), true).unwrap();
    let pre = shifted.initial_probe_accuracy.unwrap();
    let post = shifted.history.final_probe_accuracy().unwrap();
    let frozen =
        shifted.frozen_before == shifted.frozen_after && same.frozen_before == same.frozen_after;
    (
        (0.4..=0.6).contains(&same_post) && pre > 0.9 && (0.4..=0.65).contains(&post) && frozen,
        format!(
            "identical pair post {same_post:.3}; mean-shift pre {pre:.3} post {post:.3}; frozen nets unchanged: {frozen}"
        ),
    )
}

fn adaptation_benefit(ledger: &mut Ledger) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in [0, 1] {
        let (s, t) = mean_shift_pair(seed);
        let o = run_cross_lingual(&s, &t, &FeatureCondition::ALL, &desk(seed)).unwrap();
        let raw = uar_of(&o, FeatureCondition::RawFeatures);
        let latent = uar_of(&o, FeatureCondition::LatentCodes);
        let fused = uar_of(&o, FeatureCondition::Fused);
        ok &= latent >= 0.85 && raw <= 0.65 && fused >= latent - 0.02;
        parts.push(format!(
            "seed {seed}: raw {raw:.3} latent {latent:.3} fused {fused:.3}"
        ));
        ledger
            .outcomes
            .push((format!("mean-shift cross seed {seed}"), o));
    }
    (ok, parts.join("; "))
}

fn multilingual_ordering(ledger: &mut Ledger) -> Verdict {
    const SEEDS: [u64; 3] = [0, 1, 2];
    let ids: Vec<String> = four_corpora_spec()
        .corpora
        .iter()
        .map(|c| c.id.clone())
        .collect();
    let latent = [FeatureCondition::LatentCodes];
    let mut multi = vec![0.0; ids.len()];
    let mut pairwise = vec![0.0; ids.len()];
    for seed in SEEDS {
        let corpora = four_corpora(seed);
        let cfg = desk(seed);
        for (t, target) in corpora.iter().enumerate() {
            for (s, source) in corpora.iter().enumerate().filter(|(s, _)| *s != t) {
                let o = run_cross_lingual(source, target, &latent, &cfg).unwrap();
                pairwise[t] += uar_of(&o, FeatureCondition::LatentCodes) / (3 * SEEDS.len()) as f64;
                ledger
                    .outcomes
                    .push((format!("pair {}→{} seed {seed}", ids[s], ids[t]), o));
            }
            let o = run_multilingual(&corpora, &target.id, &latent, &cfg).unwrap();
            multi[t] += uar_of(&o, FeatureCondition::LatentCodes) / SEEDS.len() as f64;
            ledger
                .outcomes
                .push((format!("multi →{} seed {seed}", ids[t]), o));
        }
    }
    let wins = multi.iter().zip(&pairwise).filter(|(m, p)| m >= p).count();
    let detail = ids
        .iter()
        .zip(multi.iter().zip(&pairwise))
        .map(|(id, (m, p))| format!("{id} multi {m:.3} vs pairs {p:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    (
        wins >= 3,
        format!("{wins}/4 targets, mean over seeds {SEEDS:?}: {detail}"),
    )
}

fn protocol_audits(ledger: &mut Ledger) -> Verdict {
    let corpus = &four_corpora(0)[0];
    let o = run_baseline(
        corpus,
        &[FeatureCondition::RawFeatures, FeatureCondition::LatentCodes],
        &desk(0),
    )
    .unwrap();
    ledger.outcomes.push(("baseline".into(), o));
    let mut folds = 0;
    let mut leaks = Vec::new();
    let mut early_reads = 0;
    for (name, o) in &ledger.outcomes {
        if let Some(plan) = &o.plan {
            for (i, f) in plan.folds.iter().enumerate() {
                if check_disjoint(i, &f.train, &f.test).is_err() {
                    leaks.push(format!("{name} plan fold {i}"));
                }
            }
        }
        for r in &o.reports {
            for f in &r.folds {
                folds += 1;
                let train: BTreeSet<&String> = f.train_speakers.iter().collect();
                let test: BTreeSet<&String> = f.test_speakers.iter().collect();
                if !train.is_disjoint(&test)
                    || test.contains(&f.validation_speaker)
                    || !train.contains(&f.validation_speaker)
                {
                    leaks.push(format!("{name} fold {}", f.fold));
                }
            }
        }
        early_reads += target_reads_before_scoring(&o.label_log);
    }
    (
        leaks.is_empty() && early_reads == 0 && folds > 0,
        format!(
            "{} experiments, {folds} fold results, speaker leaks {leaks:?}, target reads before scoring {early_reads}",
            ledger.outcomes.len()
        ),
    )
}

fn cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ser-adapt"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("spec.toml"), mean_shift_spec(2.0).to_toml()).unwrap();
    let desk_toml = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    std::fs::copy(desk_toml, root.join("desk.toml")).unwrap();
    let steps: [&[&str]; 3] = [
        &[
            "generate",
            "--spec",
            "spec.toml",
            "--out",
            "data",
            "--seed",
            "7",
        ],
        &[
            "cross",
            "--config",
            "desk.toml",
            "--source",
            "data/EMO-DB.csv",
            "--target",
            "data/URDU.csv",
            "--out",
            "first",
            "--epochs",
            "10",
        ],
        &[
            "rerun",
            "--manifest",
            "first/manifest.json",
            "--out",
            "second",
        ],
    ];
    for step in steps {
        let out = cli(step, root);
        if !out.status.success() {
            return (
                false,
                format!("{step:?} failed: {}", String::from_utf8_lossy(&out.stderr)),
            );
        }
    }
    let mut identical = Vec::new();
    for name in [
        "report.csv",
        "folds.csv",
        "table.txt",
        "label_audit.csv",
        "manifest.json",
    ] {
        let a = std::fs::read(root.join("first").join(name)).unwrap();
        let b = std::fs::read(root.join("second").join(name)).unwrap();
        identical.push((name, a == b));
    }
    (
        identical.iter().all(|(_, same)| *same),
        format!("cross run re-executed from its manifest; byte-identical: {identical:?}"),
    )
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut(&mut Ledger) -> Verdict| {
        let t0 = Instant::now();
        let verdict = f(&mut ledger);
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "{} criterion {n} ({name}, {secs:.0}s): {}",
            if verdict.0 { "PASS" } else { "FAIL" },
            verdict.1
        );
        results.push((n, name, verdict, secs));
    };
    run(1, "gradient correctness", &mut |_| gradient_correctness());
    run(2, "SMO against dense QP", &mut |_| smo_oracle());
    run(3, "metrics and valence mapping", &mut |_| metric_units());
    run(4, "autoencoder convergence", &mut |_| {
        autoencoder_convergence()
    });
    run(5, "adversarial equilibrium", &mut |_| {
        adversarial_equilibrium()
    });
    run(6, "end-to-end adaptation benefit", &mut adaptation_benefit);
    run(7, "multilingual ordering", &mut multilingual_ordering);
    run(8, "leakage and protocol audits", &mut protocol_audits);
    run(9, "reproducibility", &mut |_| reproducibility());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

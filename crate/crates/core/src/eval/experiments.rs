use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::labels::AccessRecord;
use super::pipeline::{run_fold, FoldOutput, FoldTask};
use super::report::{EvalReport, ExperimentDescriptor, ExperimentKind};
use super::{EvalConfig, EvalError, FeatureCondition, FoldPlan, SpeakerKey};
use crate::adversarial::AdaptHistory;
use crate::corpus::{Corpus, Utterance};
use crate::rng::{derive_seed, derived};

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    /// One report per requested condition, in request order.
    pub reports: Vec<EvalReport>,
    /// Speaker plan for within-corpus runs.
    pub plan: Option<FoldPlan>,
    pub label_log: Vec<AccessRecord>,
    /// Adversarial training history per fold that adapted.
    pub adaptation: Vec<(usize, AdaptHistory)>,
}

fn key(u: &Utterance) -> SpeakerKey {
    SpeakerKey::new(&u.corpus_id, &u.speaker_id)
}

fn check_conditions(conditions: &[FeatureCondition]) -> Result<(), EvalError> {
    if conditions.is_empty() {
        return Err(EvalError::Protocol("no feature condition requested".into()));
    }
    Ok(())
}

fn assemble(
    kind: ExperimentKind,
    sources: Vec<String>,
    target: String,
    conditions: &[FeatureCondition],
    outputs: Vec<FoldOutput>,
    plan: Option<FoldPlan>,
) -> Result<ExperimentOutcome, EvalError> {
    let mut per_condition = vec![Vec::new(); conditions.len()];
    let mut label_log = Vec::new();
    let mut adaptation = Vec::new();
    for (fold, out) in outputs.into_iter().enumerate() {
        for (slot, res) in per_condition.iter_mut().zip(out.results) {
            slot.push(res);
        }
        label_log.extend(out.log);
        if let Some(h) = out.history {
            adaptation.push((fold, h));
        }
    }
    let reports = conditions
        .iter()
        .zip(per_condition)
        .map(|(&condition, folds)| {
            EvalReport::new(
                ExperimentDescriptor {
                    kind,
                    sources: sources.clone(),
                    target: target.clone(),
                    condition,
                },
                folds,
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(ExperimentOutcome {
        reports,
        plan,
        label_log,
        adaptation,
    })
}

fn in_fold(fold: usize) -> impl Fn(EvalError) -> EvalError {
    move |e| EvalError::InFold {
        fold,
        source: Box::new(e),
    }
}

/// Within-corpus, speaker-independent folds. With latent conditions, one
/// autoencoder per fold is trained on the training speakers and encodes
/// both sides; there is no adversarial stage.
pub fn run_baseline(
    corpus: &Corpus,
    conditions: &[FeatureCondition],
    cfg: &EvalConfig,
) -> Result<ExperimentOutcome, EvalError> {
    cfg.validate()?;
    check_conditions(conditions)?;
    let speakers: BTreeSet<SpeakerKey> = corpus.utterances.iter().map(key).collect();
    let plan = FoldPlan::build(
        &speakers,
        cfg.fold_scheme(),
        derive_seed(cfg.seed, "baseline/folds"),
    )?;
    let mut outputs = Vec::with_capacity(plan.folds.len());
    for (i, fold) in plan.folds.iter().enumerate() {
        let task = FoldTask {
            fold: i,
            tag: format!("baseline/fold{i}"),
            source: corpus
                .utterances
                .iter()
                .filter(|u| fold.train.contains(&key(u)))
                .collect(),
            target: corpus
                .utterances
                .iter()
                .filter(|u| fold.test.contains(&key(u)))
                .collect(),
            adaptation: None,
        };
        outputs.push(run_fold(&task, conditions, cfg).map_err(in_fold(i))?);
    }
    assemble(
        ExperimentKind::Baseline,
        vec![corpus.id.clone()],
        corpus.id.clone(),
        conditions,
        outputs,
        Some(plan),
    )
}

/// Train on every labeled source utterance, test on the target corpus.
pub fn run_cross_lingual(
    source: &Corpus,
    target: &Corpus,
    conditions: &[FeatureCondition],
    cfg: &EvalConfig,
) -> Result<ExperimentOutcome, EvalError> {
    transfer(
        ExperimentKind::CrossLingual,
        &[source],
        target,
        conditions,
        cfg,
    )
}

/// One-corpus-out: the union of all corpora except `held_out` is the
/// source, the held-out corpus the unlabeled target.
pub fn run_multilingual(
    corpora: &[Corpus],
    held_out: &str,
    conditions: &[FeatureCondition],
    cfg: &EvalConfig,
) -> Result<ExperimentOutcome, EvalError> {
    if corpora.len() < 2 {
        return Err(EvalError::Protocol(format!(
            "multilingual runs need at least 2 corpora, got {}",
            corpora.len()
        )));
    }
    let target = corpora.iter().find(|c| c.id == held_out).ok_or_else(|| {
        EvalError::Protocol(format!("held-out corpus {held_out:?} not among the inputs"))
    })?;
    let sources: Vec<&Corpus> = corpora.iter().filter(|c| c.id != held_out).collect();
    transfer(
        ExperimentKind::Multilingual,
        &sources,
        target,
        conditions,
        cfg,
    )
}

fn transfer(
    kind: ExperimentKind,
    sources: &[&Corpus],
    target: &Corpus,
    conditions: &[FeatureCondition],
    cfg: &EvalConfig,
) -> Result<ExperimentOutcome, EvalError> {
    cfg.validate()?;
    check_conditions(conditions)?;
    if let Some(c) = sources.iter().find(|c| c.feature_dim != target.feature_dim) {
        return Err(EvalError::Protocol(format!(
            "corpus {} has {} features, target {} has {}",
            c.id, c.feature_dim, target.id, target.feature_dim
        )));
    }
    let source_utts: Vec<&Utterance> = sources.iter().flat_map(|c| &c.utterances).collect();
    let all_target: Vec<&Utterance> = target.utterances.iter().collect();
    let (test, adaptation) = if cfg.transductive {
        (all_target.clone(), all_target)
    } else {
        let mut speakers: Vec<SpeakerKey> = all_target
            .iter()
            .map(|u| key(u))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if speakers.len() < 2 {
            return Err(EvalError::Protocol(
                "inductive adaptation needs at least 2 target speakers".into(),
            ));
        }
        speakers.shuffle(&mut derived(cfg.seed, "transfer/inductive-split"));
        let adapt_speakers: BTreeSet<SpeakerKey> =
            speakers[..speakers.len() / 2].iter().cloned().collect();
        let (adapt, test): (Vec<&Utterance>, Vec<&Utterance>) = all_target
            .into_iter()
            .partition(|u| adapt_speakers.contains(&key(u)));
        (test, adapt)
    };
    let task = FoldTask {
        fold: 0,
        tag: "transfer".to_string(),
        source: source_utts,
        target: test,
        adaptation: Some(adaptation),
    };
    let out = run_fold(&task, conditions, cfg).map_err(in_fold(0))?;
    assemble(
        kind,
        sources.iter().map(|c| c.id.clone()).collect(),
        target.id.clone(),
        conditions,
        vec![out],
        None,
    )
}

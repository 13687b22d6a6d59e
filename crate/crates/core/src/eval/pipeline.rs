//! One train/test split end to end: standardize, optionally learn (and
//! adapt) latent codes, select SVM hyperparameters on a held-out source
//! speaker, calibrate, score target utterances.

use std::collections::BTreeSet;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::labels::{AccessRecord, LabelRole, LabelStore, Purpose};
use super::metrics::{aggregate_utterance, Confusion};
use super::{check_disjoint, EvalConfig, EvalError, FeatureCondition, SpeakerKey, TargetInit};
use crate::adversarial::{adapt_source_encoder, probe_domain_gap, AdaptConfig, AdaptHistory};
use crate::autoencoder::{train_autoencoder, Autoencoder};
use crate::corpus::{stack_segments, Corpus, Standardizer, Utterance, Valence};
use crate::rng::{derive_seed, derived};
use crate::svm::{platt_calibrate, train_smo, SvmTrainConfig};

/// Per-fold, per-condition outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub condition: FeatureCondition,
    pub train_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    /// Source speaker held out for model selection and calibration, or
    /// `"<speaker> (held-out utterances)"` when the fold trains on a single
    /// speaker.
    pub validation_speaker: String,
    pub n_test_utterances: usize,
    pub uar: f64,
    pub confusion: Confusion,
    pub c_reg: f64,
    pub gamma: f64,
    /// Fingerprint of the rows the standardizer was fit on.
    pub standardizer_fit: String,
    pub train_rows: String,
    pub test_rows: String,
}

pub(crate) struct FoldTask<'a> {
    pub fold: usize,
    /// Seed tag; every random choice in the fold derives from it.
    pub tag: String,
    pub source: Vec<&'a Utterance>,
    pub target: Vec<&'a Utterance>,
    /// Unlabeled target utterances for the target autoencoder and the
    /// adversarial stage. `None` runs without adaptation: one autoencoder
    /// trained on the source encodes both sides.
    pub adaptation: Option<Vec<&'a Utterance>>,
}

pub(crate) struct FoldOutput {
    pub results: Vec<FoldResult>,
    pub log: Vec<AccessRecord>,
    pub history: Option<AdaptHistory>,
}

/// Segment rows plus the utterance each row belongs to. No labels.
struct SegmentSet {
    x: Array2<f64>,
    row_utt: Vec<usize>,
    n_utt: usize,
}

impl SegmentSet {
    fn new(utts: &[&Utterance]) -> Self {
        let x = stack_segments(utts.iter().copied());
        let row_utt = utts
            .iter()
            .enumerate()
            .flat_map(|(i, u)| std::iter::repeat_n(i, u.segments.len()))
            .collect();
        Self {
            x,
            row_utt,
            n_utt: utts.len(),
        }
    }

    /// Row indices of the utterances accepted by `keep`.
    fn rows_where(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.row_utt.len())
            .filter(|&r| keep(self.row_utt[r]))
            .collect()
    }
}

fn speaker_keys(utts: &[&Utterance]) -> BTreeSet<SpeakerKey> {
    utts.iter()
        .map(|u| SpeakerKey::new(&u.corpus_id, &u.speaker_id))
        .collect()
}

fn key_of(u: &Utterance) -> SpeakerKey {
    SpeakerKey::new(&u.corpus_id, &u.speaker_id)
}

fn row_labels(rows: &[usize], row_utt: &[usize], utt_labels: &[Valence]) -> Vec<f64> {
    rows.iter()
        .map(|&r| utt_labels[row_utt[r]].sign())
        .collect()
}

fn segment_uar(truth: &[f64], scores: &[f64]) -> f64 {
    let t: Vec<Valence> = truth.iter().map(|&y| Valence::from_sign(y)).collect();
    let p: Vec<Valence> = scores.iter().map(|&f| Valence::from_sign(f)).collect();
    Confusion::from_labels(&t, &p)
        .and_then(|c| c.uar())
        .unwrap_or(0.0)
}

struct Features {
    source: Array2<f64>,
    target: Array2<f64>,
}

struct Latents {
    source: Array2<f64>,
    target: Array2<f64>,
    history: Option<AdaptHistory>,
}

/// Source autoencoder trained on `xs`, target autoencoder on `xa`, and the
/// adaptation settings with the fold's derived seed.
fn dual_autoencoders(
    tag: &str,
    cfg: &EvalConfig,
    xs: ArrayView2<f64>,
    xa: ArrayView2<f64>,
) -> Result<(Autoencoder, Autoencoder, AdaptConfig), EvalError> {
    let (init, ae_s) = source_autoencoder(tag, cfg, xs)?;
    let init_t = match cfg.target_init {
        TargetInit::Shared => init,
        TargetInit::FromSource => ae_s.clone(),
        TargetInit::Independent => {
            let mut ae_cfg = cfg.autoencoder;
            ae_cfg.feature_dim = xs.ncols();
            Autoencoder::new(
                &ae_cfg,
                &mut derived(cfg.seed, &format!("{tag}/ae-init-target")),
            )?
        }
    };
    let (ae_t, _) = train_autoencoder(
        init_t,
        xa,
        &cfg.autoencoder_training,
        &mut derived(cfg.seed, &format!("{tag}/ae-train-target")),
    )?;
    let mut adapt_cfg = cfg.adaptation.clone();
    adapt_cfg.seed = derive_seed(cfg.seed, &format!("{tag}/adapt"));
    Ok((ae_s, ae_t, adapt_cfg))
}

/// The initial and the trained source autoencoder.
fn source_autoencoder(
    tag: &str,
    cfg: &EvalConfig,
    xs: ArrayView2<f64>,
) -> Result<(Autoencoder, Autoencoder), EvalError> {
    let mut ae_cfg = cfg.autoencoder;
    ae_cfg.feature_dim = xs.ncols();
    let init = Autoencoder::new(&ae_cfg, &mut derived(cfg.seed, &format!("{tag}/ae-init")))?;
    let (ae_s, _) = train_autoencoder(
        init.clone(),
        xs,
        &cfg.autoencoder_training,
        &mut derived(cfg.seed, &format!("{tag}/ae-train-source")),
    )?;
    Ok((init, ae_s))
}

fn learn_latents(
    task: &FoldTask<'_>,
    cfg: &EvalConfig,
    scaler: &Standardizer,
    xs: ArrayView2<f64>,
    xt: ArrayView2<f64>,
) -> Result<Latents, EvalError> {
    let Some(adapt_utts) = &task.adaptation else {
        let (_, ae) = source_autoencoder(&task.tag, cfg, xs)?;
        return Ok(Latents {
            source: ae.encode_batch(xs)?,
            target: ae.encode_batch(xt)?,
            history: None,
        });
    };
    let xa = scaler.transform(SegmentSet::new(adapt_utts).x.view())?;
    let (ae_s, ae_t, adapt_cfg) = dual_autoencoders(&task.tag, cfg, xs, xa.view())?;
    let adapted = adapt_source_encoder(&ae_s, &ae_t, xs, xa.view(), &adapt_cfg)?;
    Ok(Latents {
        source: adapted
            .encoder
            .predict(xs)
            .map_err(crate::autoencoder::AutoencoderError::from)?,
        target: ae_t.encode_batch(xt)?,
        history: Some(adapted.history),
    })
}

struct Selection {
    c_reg: f64,
    gamma: f64,
}

fn grid(cfg: &EvalConfig, dim: usize) -> Vec<(f64, f64)> {
    let cs = if cfg.c_grid.is_empty() {
        vec![cfg.svm.c_reg]
    } else {
        cfg.c_grid.clone()
    };
    let scales = if cfg.gamma_scales.is_empty() {
        vec![1.0]
    } else {
        cfg.gamma_scales.clone()
    };
    let base = cfg.svm.resolved_gamma(dim);
    cs.iter()
        .flat_map(|&c| scales.iter().map(move |&s| (c, s * base)))
        .collect()
}

/// Best grid point by segment-level UAR on the validation rows; ties keep
/// the earlier point.
fn select(
    cfg: &EvalConfig,
    x_train: ArrayView2<f64>,
    y_train: &[f64],
    x_val: ArrayView2<f64>,
    y_val: &[f64],
) -> Result<Selection, EvalError> {
    let mut best: Option<(f64, Selection)> = None;
    for (c_reg, gamma) in grid(cfg, x_train.ncols()) {
        let svm_cfg = SvmTrainConfig {
            c_reg,
            gamma: Some(gamma),
            ..cfg.svm
        };
        let model = train_smo(x_train, y_train, &svm_cfg)?;
        let score = segment_uar(y_val, &model.decision_values(x_val)?);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, Selection { c_reg, gamma }));
        }
    }
    best.map(|(_, s)| s)
        .ok_or_else(|| EvalError::Protocol("empty hyperparameter grid".into()))
}

pub(crate) fn run_fold(
    task: &FoldTask<'_>,
    conditions: &[FeatureCondition],
    cfg: &EvalConfig,
) -> Result<FoldOutput, EvalError> {
    let fold = task.fold;
    let train_keys = speaker_keys(&task.source);
    let test_keys = speaker_keys(&task.target);
    check_disjoint(fold, &train_keys, &test_keys)?;
    if let Some(adapt) = &task.adaptation {
        check_disjoint(fold, &train_keys, &speaker_keys(adapt))?;
    }

    let source = SegmentSet::new(&task.source);
    let target = SegmentSet::new(&task.target);
    let store = LabelStore::new(
        fold,
        task.source.iter().map(|u| u.valence).collect(),
        task.target.iter().map(|u| u.valence).collect(),
    );
    let all_source: Vec<usize> = (0..source.n_utt).collect();
    let source_labels = store.read(LabelRole::Source, &all_source, Purpose::Validation)?;

    // validation speaker: seeded choice among source speakers with both classes
    let eligible: Vec<&SpeakerKey> = train_keys
        .iter()
        .filter(|k| {
            let mut seen = [false; 2];
            for (u, v) in task.source.iter().zip(&source_labels) {
                if key_of(u) == **k {
                    seen[v.index()] = true;
                }
            }
            seen == [true, true]
        })
        .collect();
    let mut pick = derived(cfg.seed, &format!("{}/validation", task.tag));
    let (validation, is_val): (String, Vec<bool>) = if train_keys.len() >= 2 {
        let key = (*eligible.choose(&mut pick).ok_or_else(|| {
            EvalError::Protocol(format!("fold {fold}: no training speaker has both classes"))
        })?)
        .clone();
        (
            key.to_string(),
            task.source.iter().map(|u| key_of(u) == key).collect(),
        )
    } else {
        // a single training speaker: hold out half of its utterances of each class
        let only = train_keys
            .first()
            .ok_or_else(|| EvalError::Protocol(format!("fold {fold}: no training speakers")))?;
        let mut is_val = vec![false; source.n_utt];
        for class in Valence::ALL {
            let mut idx: Vec<usize> = (0..source.n_utt)
                .filter(|&u| source_labels[u] == class)
                .collect();
            if idx.len() < 2 {
                return Err(EvalError::Protocol(format!(
                    "fold {fold}: the only training speaker needs 2 utterances of each class"
                )));
            }
            idx.shuffle(&mut pick);
            for &u in &idx[..idx.len() / 2] {
                is_val[u] = true;
            }
        }
        (format!("{only} (held-out utterances)"), is_val)
    };
    let train_rows = source.rows_where(|u| !is_val[u]);
    let val_rows = source.rows_where(|u| is_val[u]);
    let train_utts: Vec<usize> = all_source.iter().copied().filter(|&u| !is_val[u]).collect();
    let val_utts: Vec<usize> = all_source.iter().copied().filter(|&u| is_val[u]).collect();
    let y_train = row_labels(
        &train_rows,
        &source.row_utt,
        &expand(
            &store.read(LabelRole::Source, &train_utts, Purpose::Training)?,
            &train_utts,
            source.n_utt,
        ),
    );
    let y_val = row_labels(
        &val_rows,
        &source.row_utt,
        &expand(
            &store.read(LabelRole::Source, &val_utts, Purpose::Calibration)?,
            &val_utts,
            source.n_utt,
        ),
    );

    let scaler = Standardizer::fit(source.x.view())?;
    let xs = scaler.transform(source.x.view())?;
    let xt = scaler.transform(target.x.view())?;

    let latents = if conditions.iter().any(|c| c.needs_latents()) {
        let raw = learn_latents(task, cfg, &scaler, xs.view(), xt.view())?;
        let latent_scaler = Standardizer::fit(raw.source.view())?;
        Some(Latents {
            source: latent_scaler.transform(raw.source.view())?,
            target: latent_scaler.transform(raw.target.view())?,
            history: raw.history,
        })
    } else {
        None
    };

    let mut results = Vec::with_capacity(conditions.len());
    let mut scores = Vec::with_capacity(conditions.len());
    for &condition in conditions {
        let feats = match (condition, &latents) {
            (FeatureCondition::RawFeatures, _) => Features {
                source: xs.clone(),
                target: xt.clone(),
            },
            (FeatureCondition::LatentCodes, Some(l)) => Features {
                source: l.source.clone(),
                target: l.target.clone(),
            },
            (FeatureCondition::Fused, Some(l)) => Features {
                source: concatenate![Axis(1), xs, l.source],
                target: concatenate![Axis(1), xt, l.target],
            },
            _ => unreachable!("latents are learned whenever a condition needs them"),
        };
        let x_train = feats.source.select(Axis(0), &train_rows);
        let x_val = feats.source.select(Axis(0), &val_rows);
        let sel = select(cfg, x_train.view(), &y_train, x_val.view(), &y_val)?;
        let svm_cfg = SvmTrainConfig {
            c_reg: sel.c_reg,
            gamma: Some(sel.gamma),
            ..cfg.svm
        };
        let model = train_smo(x_train.view(), &y_train, &svm_cfg)?;
        let model = platt_calibrate(&model, x_val.view(), &y_val)?;
        let probs = model.predict_proba_batch(feats.target.view())?;
        let mut per_utt = vec![Vec::new(); target.n_utt];
        for (r, p) in probs.into_iter().enumerate() {
            per_utt[target.row_utt[r]].push(p);
        }
        let predicted = per_utt
            .iter()
            .map(|p| aggregate_utterance(p).map(|(_, v)| v))
            .collect::<Result<Vec<_>, _>>()?;
        scores.push(predicted);
        results.push(FoldResult {
            fold,
            condition,
            train_speakers: train_keys.iter().map(ToString::to_string).collect(),
            test_speakers: test_keys.iter().map(ToString::to_string).collect(),
            validation_speaker: validation.clone(),
            n_test_utterances: target.n_utt,
            uar: f64::NAN,
            confusion: Confusion::default(),
            c_reg: sel.c_reg,
            gamma: sel.gamma,
            standardizer_fit: scaler.fit_fingerprint().to_string(),
            train_rows: crate::corpus::rows_fingerprint(x_train.view()),
            test_rows: crate::corpus::rows_fingerprint(feats.target.view()),
        });
    }

    // every prediction is fixed before the first target label is read
    let all_target: Vec<usize> = (0..target.n_utt).collect();
    let truth = store.read(LabelRole::Target, &all_target, Purpose::Scoring)?;
    for (res, predicted) in results.iter_mut().zip(&scores) {
        res.confusion = Confusion::from_labels(&truth, predicted)?;
        res.uar = res.confusion.uar()?;
    }
    Ok(FoldOutput {
        results,
        log: store.into_log(),
        history: latents.and_then(|l| l.history),
    })
}

/// Scatters labels read for `indices` into a full-length vector; other
/// positions keep a placeholder that no row refers to.
fn expand(labels: &[Valence], indices: &[usize], n: usize) -> Vec<Valence> {
    let mut out = vec![Valence::Negative; n];
    for (&i, &v) in indices.iter().zip(labels) {
        out[i] = v;
    }
    out
}

/// What the adversarial stage of a cross-lingual run did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationTrace {
    pub history: AdaptHistory,
    /// Probe accuracy of a discriminator trained for the same number of
    /// epochs against the unadapted source encoder.
    pub initial_probe_accuracy: Option<f64>,
    /// Fingerprints of the target autoencoder and the source decoder before
    /// and after adaptation.
    pub frozen_before: Vec<String>,
    pub frozen_after: Vec<String>,
}

/// Runs the autoencoder and adversarial stages of a transductive
/// cross-lingual run (same seeds, so the history matches the one a `cross`
/// run records). `measure_gap` also trains a discriminator against the
/// unadapted encoder.
pub fn trace_adaptation(
    source: &Corpus,
    target: &Corpus,
    cfg: &EvalConfig,
    measure_gap: bool,
) -> Result<AdaptationTrace, EvalError> {
    let source_set = SegmentSet::new(&source.utterances.iter().collect::<Vec<_>>());
    let scaler = Standardizer::fit(source_set.x.view())?;
    let xs = scaler.transform(source_set.x.view())?;
    let xt = scaler.transform(
        SegmentSet::new(&target.utterances.iter().collect::<Vec<_>>())
            .x
            .view(),
    )?;
    let (ae_s, ae_t, adapt_cfg) = dual_autoencoders("transfer", cfg, xs.view(), xt.view())?;
    let frozen = |ae_s: &Autoencoder, ae_t: &Autoencoder| {
        vec![ae_t.fingerprint(), ae_s.decoder().fingerprint()]
    };
    let frozen_before = frozen(&ae_s, &ae_t);
    let initial_probe_accuracy = if measure_gap {
        Some(probe_domain_gap(
            ae_s.encoder(),
            &ae_t,
            xs.view(),
            xt.view(),
            &adapt_cfg,
        )?)
    } else {
        None
    };
    let adapted = adapt_source_encoder(&ae_s, &ae_t, xs.view(), xt.view(), &adapt_cfg)?;
    Ok(AdaptationTrace {
        history: adapted.history,
        initial_probe_accuracy,
        frozen_before,
        frozen_after: frozen(&ae_s, &ae_t),
    })
}

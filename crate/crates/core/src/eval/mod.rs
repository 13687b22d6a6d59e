//! Speaker-independent experiments: within-corpus baseline, cross-lingual
//! transfer and multilingual one-corpus-out transfer, each scored by
//! unweighted average recall over utterance-level valence decisions.

mod experiments;
mod folds;
mod labels;
mod metrics;
mod pipeline;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{AdaptConfig, AdversarialError};
use crate::autoencoder::{AutoencoderConfig, AutoencoderError, TrainConfig};
use crate::corpus::CorpusError;
use crate::nn::RmsPropConfig;
use crate::svm::{SvmError, SvmTrainConfig};

pub use experiments::{run_baseline, run_cross_lingual, run_multilingual, ExperimentOutcome};
pub use folds::{check_disjoint, Fold, FoldPlan, FoldScheme, SpeakerKey};
pub use labels::{target_reads_before_scoring, AccessRecord, LabelRole, LabelStore, Purpose};
pub use metrics::{aggregate_utterance, uar, Confusion};
pub use pipeline::{trace_adaptation, AdaptationTrace, FoldResult};
pub use report::{
    folds_csv, summary_csv, summary_table, EvalReport, ExperimentDescriptor, ExperimentKind,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Autoencoder(#[from] AutoencoderError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
    #[error("label firewall: target labels requested for {purpose:?} in fold {fold}")]
    Leakage { fold: usize, purpose: Purpose },
    #[error("fold {fold}: speaker {speaker} appears in both train and test")]
    SpeakerLeak { fold: usize, speaker: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("metric: {0}")]
    Metric(String),
    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
}

impl EvalError {
    /// True for failures of the numerical machinery rather than of the
    /// input data or the protocol.
    pub fn is_numerical(&self) -> bool {
        match self {
            EvalError::InFold { source, .. } => source.is_numerical(),
            EvalError::Svm(e) => matches!(
                e,
                SvmError::NotConverged { .. } | SvmError::CalibrationFailed { .. }
            ),
            EvalError::Autoencoder(e) => matches!(
                e,
                AutoencoderError::NonFiniteLoss { .. } | AutoencoderError::Nn(_)
            ),
            EvalError::Adversarial(e) => matches!(
                e,
                AdversarialError::NonFiniteLoss { .. } | AdversarialError::Nn(_)
            ),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureCondition {
    #[serde(rename = "raw")]
    RawFeatures,
    #[serde(rename = "latent")]
    LatentCodes,
    #[serde(rename = "fused")]
    Fused,
}

impl FeatureCondition {
    pub const ALL: [FeatureCondition; 3] = [
        FeatureCondition::RawFeatures,
        FeatureCondition::LatentCodes,
        FeatureCondition::Fused,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            FeatureCondition::RawFeatures => "raw",
            FeatureCondition::LatentCodes => "latent",
            FeatureCondition::Fused => "fused",
        }
    }

    pub fn needs_latents(self) -> bool {
        self != FeatureCondition::RawFeatures
    }

    /// Parses `raw`, `latent`, `fused` or `all`.
    pub fn parse_set(s: &str) -> Result<Vec<FeatureCondition>, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::ALL.to_vec());
        }
        s.parse().map(|c| vec![c])
    }
}

impl fmt::Display for FeatureCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for FeatureCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" | "raw_features" | "egemaps" => Ok(FeatureCondition::RawFeatures),
            "latent" | "latent_codes" => Ok(FeatureCondition::LatentCodes),
            "fused" => Ok(FeatureCondition::Fused),
            other => Err(format!(
                "unknown feature condition {other:?} (raw, latent, fused, all)"
            )),
        }
    }
}

/// Starting weights of the target autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetInit {
    /// The same random initialization as the source autoencoder.
    Shared,
    /// The trained source autoencoder.
    FromSource,
    /// An independent random initialization.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Every random choice derives from this seed.
    pub seed: u64,
    /// Speaker folds for within-corpus runs: `None` is leave-one-speaker-out,
    /// `Some(k)` grouped k-fold.
    pub folds: Option<usize>,
    /// Adapt on all target segments (`true`) or on a disjoint half of the
    /// target speakers, scoring only the other half.
    pub transductive: bool,
    pub target_init: TargetInit,
    /// `feature_dim` is taken from the data.
    pub autoencoder: AutoencoderConfig,
    pub autoencoder_training: TrainConfig,
    /// `seed` is ignored; a seed derived from the experiment seed is used.
    pub adaptation: AdaptConfig,
    pub svm: SvmTrainConfig,
    /// Candidate `C` values; empty means `svm.c_reg` only.
    pub c_grid: Vec<f64>,
    /// Multipliers applied to the base gamma (`svm.gamma` or `1/dim`).
    pub gamma_scales: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: None,
            transductive: true,
            target_init: TargetInit::Shared,
            autoencoder: AutoencoderConfig::default(),
            autoencoder_training: TrainConfig::default(),
            adaptation: AdaptConfig::default(),
            svm: SvmTrainConfig::default(),
            c_grid: vec![0.1, 1.0, 10.0],
            gamma_scales: vec![0.5, 1.0, 2.0],
        }
    }
}

impl EvalConfig {
    /// Settings sized for synthetic corpora of a few hundred utterances:
    /// a 64-unit hidden layer, 384-wide codes, the target autoencoder
    /// started from the trained source one and a faster encoder during
    /// adaptation.
    pub fn desk_scale() -> Self {
        let mut cfg = Self::default();
        cfg.autoencoder.hidden_dim = 64;
        cfg.autoencoder.latent_dim = 384;
        cfg.target_init = TargetInit::FromSource;
        cfg.adaptation.encoder_optimizer = RmsPropConfig::default().with_learning_rate(3e-4);
        cfg
    }

    pub fn fold_scheme(&self) -> FoldScheme {
        match self.folds {
            None => FoldScheme::LeaveOneSpeakerOut,
            Some(k) => FoldScheme::GroupedKFold(k),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        self.svm.validate()?;
        if self
            .c_grid
            .iter()
            .chain(&self.gamma_scales)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(EvalError::Protocol("grid values must be positive".into()));
        }
        Ok(())
    }
}

//! Feature corpora: utterances made of fixed-width segment feature vectors,
//! speaker metadata, valence labels, feature standardization, and a
//! synthetic multi-corpus generator.

mod io;
mod standardize;
mod synthetic;
mod valence;

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::Array2;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{load_corpus, read_corpus, write_corpus, CorpusSchema, FEATURE_PREFIX};
pub(crate) use standardize::rows_fingerprint;
pub use standardize::{Standardizer, STD_FLOOR};
pub use synthetic::{
    generate_synthetic_corpus, ClassPair, ClassSpec, CovarianceSpec, ShiftSpec,
    SyntheticCorpusSpec, SyntheticSpec, VectorSpec,
};
pub use valence::{map_valence, LabelScheme, Valence, ValenceRegistry};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("emotion {emotion:?} has no valence mapping for corpus {corpus:?}")]
    UnmappedEmotion { corpus: String, emotion: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header: {0}")]
    Header(String),
    #[error(
        "line {line}: expected {expected} feature values, found {actual} (feature dimension drift)"
    )]
    DimensionDrift {
        line: u64,
        expected: usize,
        actual: usize,
    },
    #[error("line {line}: cannot parse {column} value {value:?}")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: non-finite feature value in {column}")]
    NonFinite { line: u64, column: String },
    #[error("line {line}: duplicate segment {segment_index} of utterance {utterance:?}")]
    DuplicateSegment {
        line: u64,
        utterance: String,
        segment_index: usize,
    },
    #[error("line {line}: declared valence {declared} but {emotion:?} maps to {expected}")]
    ValenceMismatch {
        line: u64,
        emotion: String,
        declared: Valence,
        expected: Valence,
    },
    #[error("line {line}: utterance {utterance:?} changes its {field}")]
    InconsistentUtterance {
        line: u64,
        utterance: String,
        field: &'static str,
    },
    #[error("line {line}: file mixes corpora {expected:?} and {found:?}")]
    MixedCorpus {
        line: u64,
        expected: String,
        found: String,
    },
    #[error("line {line}: empty {field}")]
    EmptyField { line: u64, field: &'static str },
    #[error("corpus file has no data rows")]
    Empty,
    #[error("standardizer needs at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("feature width {actual} does not match standardizer width {expected}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("synthetic spec: {0}")]
    SpecSyntax(#[from] toml::de::Error),
    #[error("covariance of class {class} in corpus {corpus:?} is not positive definite")]
    NotPositiveDefinite { corpus: String, class: Valence },
}

/// One feature vector for one fixed-length speech segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFeature {
    pub values: Vec<f64>,
    pub segment_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker_id: String,
    pub corpus_id: String,
    pub segments: Vec<SegmentFeature>,
    pub emotion: String,
    pub valence: Valence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub id: String,
    pub language: String,
    pub feature_dim: usize,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn speakers(&self) -> BTreeSet<String> {
        self.utterances
            .iter()
            .map(|u| u.speaker_id.clone())
            .collect()
    }

    pub fn n_segments(&self) -> usize {
        self.utterances.iter().map(|u| u.segments.len()).sum()
    }

    /// Checks the structural invariants and the valence mapping of every
    /// utterance.
    pub fn validate(&self, registry: &ValenceRegistry) -> Result<(), CorpusError> {
        if self.feature_dim == 0 {
            return Err(CorpusError::Invalid(
                "feature dimension must be positive".into(),
            ));
        }
        for u in &self.utterances {
            if u.speaker_id.trim().is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "utterance {:?} has no speaker",
                    u.id
                )));
            }
            if u.segments.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "utterance {:?} has no segments",
                    u.id
                )));
            }
            if let Some(s) = u
                .segments
                .iter()
                .find(|s| s.values.len() != self.feature_dim)
            {
                return Err(CorpusError::Invalid(format!(
                    "utterance {:?} segment {} has {} features, corpus declares {}",
                    u.id,
                    s.segment_index,
                    s.values.len(),
                    self.feature_dim
                )));
            }
            if u.segments
                .iter()
                .flat_map(|s| &s.values)
                .any(|v| !v.is_finite())
            {
                return Err(CorpusError::Invalid(format!(
                    "utterance {:?} has non-finite features",
                    u.id
                )));
            }
            let expected = registry.map(&u.corpus_id, &u.emotion)?;
            if expected != u.valence {
                return Err(CorpusError::Invalid(format!(
                    "utterance {:?}: valence {} contradicts {:?} → {expected}",
                    u.id, u.valence, u.emotion
                )));
            }
        }
        Ok(())
    }

    /// All segments stacked row-wise in utterance order.
    pub fn segment_matrix(&self) -> Array2<f64> {
        stack_segments(self.utterances.iter())
    }

    /// SHA-256 over ids, labels and feature bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.id.as_bytes());
        h.update((self.feature_dim as u64).to_le_bytes());
        for u in &self.utterances {
            for s in [&u.id, &u.speaker_id, &u.corpus_id, &u.emotion] {
                h.update(s.as_bytes());
                h.update([0]);
            }
            h.update([u.valence.index() as u8]);
            for seg in &u.segments {
                h.update((seg.segment_index as u64).to_le_bytes());
                for v in &seg.values {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn stack_segments<'a>(utterances: impl Iterator<Item = &'a Utterance>) -> Array2<f64> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut width = 0;
    for u in utterances {
        for s in &u.segments {
            width = s.values.len();
            data.extend_from_slice(&s.values);
            rows += 1;
        }
    }
    Array2::from_shape_vec((rows, width), data).expect("segments share one width")
}

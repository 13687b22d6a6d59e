//! Feature-file format: UTF-8 CSV, one row per segment, header
//!
//! ```text
//! corpus_id,speaker_id,utterance_id,segment_index,emotion,f000,...,f087[,valence]
//! ```
//!
//! Feature columns are `f` followed by a zero-padded index and must appear
//! in order. An optional `valence` column is cross-checked against the
//! registry mapping of `emotion`.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Corpus, CorpusError, SegmentFeature, Utterance, Valence, ValenceRegistry};

pub const FEATURE_PREFIX: char = 'f';
const META: [&str; 5] = [
    "corpus_id",
    "speaker_id",
    "utterance_id",
    "segment_index",
    "emotion",
];

/// What a loader expects of a feature file.
#[derive(Clone, Debug, Default)]
pub struct CorpusSchema {
    /// Required feature width; `None` accepts whatever the header declares.
    pub feature_dim: Option<usize>,
    pub registry: ValenceRegistry,
}

impl CorpusSchema {
    pub fn with_feature_dim(feature_dim: usize) -> Self {
        Self {
            feature_dim: Some(feature_dim),
            registry: ValenceRegistry::table_one(),
        }
    }
}

pub fn feature_column(i: usize) -> String {
    format!("{FEATURE_PREFIX}{i:03}")
}

pub fn load_corpus(path: &Path, schema: &CorpusSchema) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(file, schema)
}

struct Columns {
    meta: [usize; 5],
    features: Vec<usize>,
    valence: Option<usize>,
    width: usize,
}

fn parse_header(header: &csv::StringRecord, schema: &CorpusSchema) -> Result<Columns, CorpusError> {
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut meta = [0usize; 5];
    for (slot, name) in meta.iter_mut().zip(META) {
        *slot =
            find(name).ok_or_else(|| CorpusError::Header(format!("missing column {name:?}")))?;
    }
    let mut features = Vec::new();
    for (i, h) in header.iter().enumerate() {
        let h = h.trim();
        let is_feature = h.len() > 1
            && h.starts_with(FEATURE_PREFIX)
            && h[1..].chars().all(|c| c.is_ascii_digit());
        if is_feature {
            let idx: usize = h[1..].parse().expect("all digits");
            if idx != features.len() {
                return Err(CorpusError::Header(format!(
                    "feature column {h:?} out of order, expected {}",
                    feature_column(features.len())
                )));
            }
            features.push(i);
        }
    }
    if features.is_empty() {
        return Err(CorpusError::Header("no feature columns".into()));
    }
    if let Some(d) = schema.feature_dim {
        if d != features.len() {
            return Err(CorpusError::Header(format!(
                "header declares {} features, schema expects {d}",
                features.len()
            )));
        }
    }
    Ok(Columns {
        meta,
        features,
        valence: find("valence"),
        width: header.len(),
    })
}

/// Reads a feature file from any reader; see [`load_corpus`].
pub fn read_corpus<R: Read>(reader: R, schema: &CorpusSchema) -> Result<Corpus, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = parse_header(rdr.headers()?, schema)?;
    let dim = cols.features.len();

    let mut corpus_id: Option<String> = None;
    let mut utterances: Vec<Utterance> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols.width {
            return Err(CorpusError::DimensionDrift {
                line,
                expected: dim,
                actual: (record.len() + dim).saturating_sub(cols.width),
            });
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let [c_corpus, c_speaker, c_utt, c_seg, c_emotion] = cols.meta;
        for (c, name) in [
            (c_corpus, "corpus_id"),
            (c_speaker, "speaker_id"),
            (c_utt, "utterance_id"),
            (c_emotion, "emotion"),
        ] {
            if field(c).is_empty() {
                return Err(CorpusError::EmptyField { line, field: name });
            }
        }
        let cid = field(c_corpus);
        match &corpus_id {
            None => corpus_id = Some(cid.to_string()),
            Some(expected) if expected != cid => {
                return Err(CorpusError::MixedCorpus {
                    line,
                    expected: expected.clone(),
                    found: cid.to_string(),
                })
            }
            Some(_) => {}
        }
        let segment_index: usize = field(c_seg).parse().map_err(|_| CorpusError::Parse {
            line,
            column: "segment_index".into(),
            value: field(c_seg).into(),
        })?;
        let emotion = field(c_emotion);
        let valence = schema.registry.map(cid, emotion)?;
        if let Some(vc) = cols.valence {
            let raw = field(vc);
            if !raw.is_empty() {
                let declared: Valence = raw.parse().map_err(|_| CorpusError::Parse {
                    line,
                    column: "valence".into(),
                    value: raw.into(),
                })?;
                if declared != valence {
                    return Err(CorpusError::ValenceMismatch {
                        line,
                        emotion: emotion.into(),
                        declared,
                        expected: valence,
                    });
                }
            }
        }
        let mut values = Vec::with_capacity(dim);
        for (k, &c) in cols.features.iter().enumerate() {
            let v: f64 = field(c).parse().map_err(|_| CorpusError::Parse {
                line,
                column: feature_column(k),
                value: field(c).into(),
            })?;
            if !v.is_finite() {
                return Err(CorpusError::NonFinite {
                    line,
                    column: feature_column(k),
                });
            }
            values.push(v);
        }

        let utt_id = field(c_utt);
        let slot = match by_id.entry(utt_id.to_string()) {
            Entry::Occupied(e) => {
                let u = &utterances[*e.get()];
                if u.speaker_id != field(c_speaker) {
                    return Err(CorpusError::InconsistentUtterance {
                        line,
                        utterance: utt_id.into(),
                        field: "speaker_id",
                    });
                }
                if u.emotion != emotion {
                    return Err(CorpusError::InconsistentUtterance {
                        line,
                        utterance: utt_id.into(),
                        field: "emotion",
                    });
                }
                *e.get()
            }
            Entry::Vacant(e) => {
                utterances.push(Utterance {
                    id: utt_id.into(),
                    speaker_id: field(c_speaker).into(),
                    corpus_id: cid.into(),
                    segments: Vec::new(),
                    emotion: emotion.into(),
                    valence,
                });
                *e.insert(utterances.len() - 1)
            }
        };
        if seen.insert((slot, segment_index), ()).is_some() {
            return Err(CorpusError::DuplicateSegment {
                line,
                utterance: utt_id.into(),
                segment_index,
            });
        }
        utterances[slot].segments.push(SegmentFeature {
            values,
            segment_index,
        });
    }

    let id = corpus_id.ok_or(CorpusError::Empty)?;
    for u in &mut utterances {
        u.segments.sort_by_key(|s| s.segment_index);
    }
    let language = schema
        .registry
        .scheme(&id)
        .map_or_else(|| "unknown".to_string(), |s| s.language.clone());
    Ok(Corpus {
        id,
        language,
        feature_dim: dim,
        utterances,
    })
}

/// Writes `corpus` in the feature-file format, including the `valence`
/// column. Values use the shortest representation that parses back to the
/// same `f64`.
pub fn write_corpus<W: Write>(corpus: &Corpus, writer: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = META.iter().map(|s| s.to_string()).collect();
    header.extend((0..corpus.feature_dim).map(feature_column));
    header.push("valence".into());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for u in &corpus.utterances {
        for s in &u.segments {
            row.clear();
            row.push(u.corpus_id.clone());
            row.push(u.speaker_id.clone());
            row.push(u.id.clone());
            row.push(s.segment_index.to_string());
            row.push(u.emotion.clone());
            row.extend(s.values.iter().map(|v| v.to_string()));
            row.push(u.valence.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| CorpusError::Csv(e.into()))?;
    Ok(())
}

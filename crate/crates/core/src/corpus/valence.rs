use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Negative,
    Positive,
}

impl Valence {
    pub const ALL: [Valence; 2] = [Valence::Negative, Valence::Positive];

    pub fn index(self) -> usize {
        match self {
            Valence::Negative => 0,
            Valence::Positive => 1,
        }
    }

    /// `+1` for positive valence, `-1` for negative (the SVM label).
    pub fn sign(self) -> f64 {
        match self {
            Valence::Negative => -1.0,
            Valence::Positive => 1.0,
        }
    }

    /// Positive iff `score > 0`; zero goes to negative.
    pub fn from_sign(score: f64) -> Self {
        if score > 0.0 {
            Valence::Positive
        } else {
            Valence::Negative
        }
    }
}

impl fmt::Display for Valence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Valence::Negative => "negative",
            Valence::Positive => "positive",
        })
    }
}

impl FromStr for Valence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" => Ok(Valence::Negative),
            "positive" | "pos" => Ok(Valence::Positive),
            other => Err(format!("unknown valence {other:?}")),
        }
    }
}

/// Emotion categories of one corpus, split by valence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub language: String,
    pub negative: Vec<String>,
    pub positive: Vec<String>,
}

impl LabelScheme {
    pub fn emotions(&self, valence: Valence) -> &[String] {
        match valence {
            Valence::Negative => &self.negative,
            Valence::Positive => &self.positive,
        }
    }
}

/// Corpus → emotion → valence registry. Corpus ids and emotion names are
/// matched case-insensitively after trimming whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValenceRegistry {
    schemes: BTreeMap<String, LabelScheme>,
}

fn key(s: &str) -> String {
    s.trim().to_uppercase()
}

fn scheme(language: &str, negative: &[&str], positive: &[&str]) -> LabelScheme {
    LabelScheme {
        language: language.to_string(),
        negative: negative.iter().map(|s| s.to_string()).collect(),
        positive: positive.iter().map(|s| s.to_string()).collect(),
    }
}

impl Default for ValenceRegistry {
    fn default() -> Self {
        Self::table_one()
    }
}

impl ValenceRegistry {
    pub fn empty() -> Self {
        Self {
            schemes: BTreeMap::new(),
        }
    }

    /// The binary valence mapping of the four emotional speech corpora.
    pub fn table_one() -> Self {
        let mut r = Self::empty();
        r.register(
            "EMO-DB",
            scheme(
                "German",
                &["Anger", "Sadness", "Fear", "Disgust", "Boredom"],
                &["Neutral", "Happiness"],
            ),
        );
        r.register(
            "SAVEE",
            scheme(
                "English",
                &["Anger", "Sadness", "Fear", "Disgust"],
                &["Neutral", "Happiness", "Surprise"],
            ),
        );
        r.register(
            "EMOVO",
            scheme(
                "Italian",
                &["Anger", "Sadness", "Fear", "Disgust"],
                &["Neutral", "Joy", "Surprise"],
            ),
        );
        r.register(
            "URDU",
            scheme("Urdu", &["Angry", "Sad"], &["Neutral", "Happy"]),
        );
        r
    }

    pub fn register(&mut self, corpus_id: &str, scheme: LabelScheme) {
        self.schemes.insert(key(corpus_id), scheme);
    }

    pub fn scheme(&self, corpus_id: &str) -> Option<&LabelScheme> {
        let k = key(corpus_id);
        self.schemes.get(&k).or_else(|| {
            // "EMODB" is a common spelling of "EMO-DB"
            let squashed: String = k.chars().filter(|c| *c != '-' && *c != '_').collect();
            self.schemes
                .iter()
                .find(|(id, _)| {
                    id.chars()
                        .filter(|c| *c != '-' && *c != '_')
                        .collect::<String>()
                        == squashed
                })
                .map(|(_, s)| s)
        })
    }

    pub fn corpus_ids(&self) -> impl Iterator<Item = &str> {
        self.schemes.keys().map(String::as_str)
    }

    pub fn map(&self, corpus_id: &str, emotion: &str) -> Result<Valence, CorpusError> {
        let unmapped = || CorpusError::UnmappedEmotion {
            corpus: corpus_id.to_string(),
            emotion: emotion.to_string(),
        };
        let scheme = self.scheme(corpus_id).ok_or_else(unmapped)?;
        let e = emotion.trim();
        for v in Valence::ALL {
            if scheme.emotions(v).iter().any(|x| x.eq_ignore_ascii_case(e)) {
                return Ok(v);
            }
        }
        Err(unmapped())
    }
}

/// Maps a corpus emotion label onto binary valence using the built-in
/// four-corpus registry.
pub fn map_valence(corpus_id: &str, emotion: &str) -> Result<Valence, CorpusError> {
    ValenceRegistry::table_one().map(corpus_id, emotion)
}

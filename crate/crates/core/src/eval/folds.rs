use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::seeded;

/// A speaker qualified by its corpus, so equal speaker ids in different
/// corpora stay distinct.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeakerKey {
    pub corpus: String,
    pub speaker: String,
}

impl SpeakerKey {
    pub fn new(corpus: &str, speaker: &str) -> Self {
        Self {
            corpus: corpus.to_string(),
            speaker: speaker.to_string(),
        }
    }
}

impl fmt::Display for SpeakerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.corpus, self.speaker)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    LeaveOneSpeakerOut,
    /// `k` folds of speakers, sizes differing by at most one, assigned
    /// after a seeded shuffle.
    GroupedKFold(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: BTreeSet<SpeakerKey>,
    pub test: BTreeSet<SpeakerKey>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub scheme: FoldScheme,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn build(
        speakers: &BTreeSet<SpeakerKey>,
        scheme: FoldScheme,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let n = speakers.len();
        if n < 2 {
            return Err(EvalError::Protocol(format!(
                "speaker-independent folds need at least 2 speakers, found {n}"
            )));
        }
        let groups: Vec<BTreeSet<SpeakerKey>> = match scheme {
            FoldScheme::LeaveOneSpeakerOut => speakers
                .iter()
                .map(|s| BTreeSet::from([s.clone()]))
                .collect(),
            FoldScheme::GroupedKFold(k) => {
                if k < 2 || k > n {
                    return Err(EvalError::Protocol(format!(
                        "grouped {k}-fold needs 2 <= k <= {n} speakers"
                    )));
                }
                let mut order: Vec<&SpeakerKey> = speakers.iter().collect();
                order.shuffle(&mut seeded(seed));
                let mut groups = vec![BTreeSet::new(); k];
                for (i, s) in order.into_iter().enumerate() {
                    groups[i % k].insert(s.clone());
                }
                groups
            }
        };
        let folds = groups
            .into_iter()
            .map(|test| Fold {
                train: speakers.difference(&test).cloned().collect(),
                test,
            })
            .collect();
        let plan = Self { scheme, folds };
        plan.check()?;
        Ok(plan)
    }

    /// Verifies that no fold shares a speaker between train and test and
    /// that test sets are pairwise disjoint.
    pub fn check(&self) -> Result<(), EvalError> {
        let mut seen = BTreeSet::new();
        for (i, f) in self.folds.iter().enumerate() {
            check_disjoint(i, &f.train, &f.test)?;
            for s in &f.test {
                if !seen.insert(s.clone()) {
                    return Err(EvalError::Protocol(format!(
                        "speaker {s} is tested in more than one fold"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn check_disjoint(
    fold: usize,
    train: &BTreeSet<SpeakerKey>,
    test: &BTreeSet<SpeakerKey>,
) -> Result<(), EvalError> {
    match train.intersection(test).next() {
        Some(s) => Err(EvalError::SpeakerLeak {
            fold,
            speaker: s.to_string(),
        }),
        None => Ok(()),
    }
}

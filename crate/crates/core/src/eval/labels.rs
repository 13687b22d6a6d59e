//! Access-audited label storage. Every read is logged with its purpose;
//! target labels are released for scoring only.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Valence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRole {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Training,
    Validation,
    Calibration,
    Scoring,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub fold: usize,
    pub role: LabelRole,
    pub purpose: Purpose,
    pub count: usize,
    pub granted: bool,
}

#[derive(Debug)]
pub struct LabelStore {
    fold: usize,
    source: Vec<Valence>,
    target: Vec<Valence>,
    log: RefCell<Vec<AccessRecord>>,
}

impl LabelStore {
    pub fn new(fold: usize, source: Vec<Valence>, target: Vec<Valence>) -> Self {
        Self {
            fold,
            source,
            target,
            log: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self, role: LabelRole) -> usize {
        match role {
            LabelRole::Source => self.source.len(),
            LabelRole::Target => self.target.len(),
        }
    }

    /// Labels of the utterances at `indices`. A target read for any
    /// purpose other than scoring is refused and logged as refused.
    pub fn read(
        &self,
        role: LabelRole,
        indices: &[usize],
        purpose: Purpose,
    ) -> Result<Vec<Valence>, EvalError> {
        let granted = role == LabelRole::Source || purpose == Purpose::Scoring;
        self.log.borrow_mut().push(AccessRecord {
            fold: self.fold,
            role,
            purpose,
            count: indices.len(),
            granted,
        });
        if !granted {
            return Err(EvalError::Leakage {
                fold: self.fold,
                purpose,
            });
        }
        let labels = match role {
            LabelRole::Source => &self.source,
            LabelRole::Target => &self.target,
        };
        indices
            .iter()
            .map(|&i| {
                labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| EvalError::Protocol(format!("label index {i} out of range")))
            })
            .collect()
    }

    pub fn into_log(self) -> Vec<AccessRecord> {
        self.log.into_inner()
    }
}

/// Target reads that precede the first target scoring read, plus any
/// refused target read. Zero means the firewall held.
pub fn target_reads_before_scoring(log: &[AccessRecord]) -> usize {
    let mut count = 0;
    let mut folds_scored = std::collections::BTreeSet::new();
    for r in log.iter().filter(|r| r.role == LabelRole::Target) {
        if r.purpose == Purpose::Scoring && r.granted {
            folds_scored.insert(r.fold);
        } else if !folds_scored.contains(&r.fold) || !r.granted {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use Valence::*;

    #[test]
    fn target_labels_only_for_scoring() {
        let store = LabelStore::new(
            0,
            vec![Negative, Positive],
            vec![Positive, Positive, Negative],
        );
        assert_eq!(
            store
                .read(LabelRole::Source, &[1, 0], Purpose::Training)
                .unwrap(),
            vec![Positive, Negative]
        );
        for p in [Purpose::Training, Purpose::Validation, Purpose::Calibration] {
            assert!(matches!(
                store.read(LabelRole::Target, &[0], p),
                Err(EvalError::Leakage { fold: 0, purpose }) if purpose == p
            ));
        }
        assert_eq!(
            store
                .read(LabelRole::Target, &[2], Purpose::Scoring)
                .unwrap(),
            vec![Negative]
        );
        let log = store.into_log();
        assert_eq!(log.len(), 5);
        assert_eq!(log.iter().filter(|r| !r.granted).count(), 3);
        assert_eq!(target_reads_before_scoring(&log), 3);
    }

    #[test]
    fn clean_log_counts_zero() {
        let store = LabelStore::new(2, vec![Negative, Positive], vec![Positive]);
        store
            .read(LabelRole::Source, &[0, 1], Purpose::Training)
            .unwrap();
        store
            .read(LabelRole::Source, &[1], Purpose::Calibration)
            .unwrap();
        store
            .read(LabelRole::Target, &[0], Purpose::Scoring)
            .unwrap();
        assert_eq!(target_reads_before_scoring(&store.into_log()), 0);
    }
}

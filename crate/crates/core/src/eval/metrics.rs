use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Valence;

/// Counts indexed `[true][predicted]` by [`Valence::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; 2]; 2]);

impl Confusion {
    pub fn from_labels(truth: &[Valence], predicted: &[Valence]) -> Result<Self, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::Metric(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = [[0usize; 2]; 2];
        for (t, p) in truth.iter().zip(predicted) {
            c[t.index()][p.index()] += 1;
        }
        Ok(Confusion(c))
    }

    pub fn support(&self, class: Valence) -> usize {
        self.0[class.index()].iter().sum()
    }

    pub fn recall(&self, class: Valence) -> Option<f64> {
        let n = self.support(class);
        (n > 0).then(|| self.0[class.index()][class.index()] as f64 / n as f64)
    }

    /// Mean per-class recall; errors when a class has no true instance.
    pub fn uar(&self) -> Result<f64, EvalError> {
        let mut sum = 0.0;
        for v in Valence::ALL {
            sum += self.recall(v).ok_or_else(|| {
                EvalError::Metric(format!("no true {v} instance; recall undefined"))
            })?;
        }
        Ok(sum / Valence::ALL.len() as f64)
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.0.iter().flatten().sum();
        (self.0[0][0] + self.0[1][1]) as f64 / total.max(1) as f64
    }

    pub fn add(&mut self, other: &Confusion) {
        for t in 0..2 {
            for p in 0..2 {
                self.0[t][p] += other.0[t][p];
            }
        }
    }
}

/// Unweighted average recall over both valence classes.
pub fn uar(truth: &[Valence], predicted: &[Valence]) -> Result<f64, EvalError> {
    Confusion::from_labels(truth, predicted)?.uar()
}

/// Mean segment posterior of one utterance and its label: positive iff the
/// mean exceeds 0.5, so an exact tie goes to negative.
pub fn aggregate_utterance(segment_posteriors: &[f64]) -> Result<(f64, Valence), EvalError> {
    if segment_posteriors.is_empty() {
        return Err(EvalError::Metric(
            "utterance has no segment posteriors".into(),
        ));
    }
    if let Some(p) = segment_posteriors
        .iter()
        .find(|p| !(0.0..=1.0).contains(*p))
    {
        return Err(EvalError::Metric(format!("posterior {p} outside [0, 1]")));
    }
    let mean = segment_posteriors.iter().sum::<f64>() / segment_posteriors.len() as f64;
    let label = if mean > 0.5 {
        Valence::Positive
    } else {
        Valence::Negative
    };
    Ok((mean, label))
}

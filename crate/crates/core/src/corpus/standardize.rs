use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension z-scoring. Standard deviations are population
/// (divide-by-n) values floored at [`STD_FLOOR`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    fit_fingerprint: String,
}

/// SHA-256 over the shape and bytes of a row matrix.
pub(crate) fn rows_fingerprint(rows: ArrayView2<f64>) -> String {
    let mut h = Sha256::new();
    h.update((rows.nrows() as u64).to_le_bytes());
    h.update((rows.ncols() as u64).to_le_bytes());
    for v in rows.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Standardizer {
    pub fn fit(rows: ArrayView2<f64>) -> Result<Self, CorpusError> {
        let n = rows.nrows();
        if n < 2 {
            return Err(CorpusError::TooFewSegments(n));
        }
        let d = rows.ncols();
        let mut mean = vec![0.0; d];
        for row in rows.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in rows.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self {
            mean,
            std,
            fit_fingerprint: rows_fingerprint(rows),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Fingerprint of the rows this standardizer was fitted on.
    pub fn fit_fingerprint(&self) -> &str {
        &self.fit_fingerprint
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, CorpusError> {
        if x.len() != self.dim() {
            return Err(CorpusError::WidthMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>, CorpusError> {
        if rows.ncols() != self.dim() {
            return Err(CorpusError::WidthMismatch {
                expected: self.dim(),
                actual: rows.ncols(),
            });
        }
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

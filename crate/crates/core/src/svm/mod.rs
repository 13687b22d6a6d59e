//! Binary RBF-kernel SVM trained by SMO, with Platt-scaled posteriors.
//!
//! Labels are `+1` (positive valence) and `-1` (negative valence); the
//! calibrated probability is that of the positive class.

mod kernel;
mod platt;
mod smo;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{rbf_cross, rbf_gram, rbf_kernel};
pub use platt::{fit_platt, PlattParams, PLATT_SLOPE_RIDGE};
pub use smo::{kkt_violations, solve_dual, DualSolution};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("invalid SVM config: {0}")]
    InvalidConfig(String),
    #[error("SMO did not converge after {iterations} iterations (violation {gap:.3e})")]
    NotConverged { iterations: usize, gap: f64 },
    #[error("model is not calibrated; run platt_calibrate first")]
    Uncalibrated,
    #[error("Platt calibration failed ({reason}); last iterate a = {a}, b = {b}")]
    CalibrationFailed { a: f64, b: f64, reason: String },
    #[error("model serialization: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmTrainConfig {
    pub c_reg: f64,
    /// RBF bandwidth; `None` means `1 / feature_dim`.
    pub gamma: Option<f64>,
    pub kkt_tolerance: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            c_reg: 1.0,
            gamma: None,
            kkt_tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvmTrainConfig {
    pub fn resolved_gamma(&self, dim: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / dim.max(1) as f64)
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c_reg > 0.0 && self.c_reg.is_finite()) {
            return Err(SvmError::InvalidConfig(format!(
                "c_reg must be positive, got {}",
                self.c_reg
            )));
        }
        if let Some(g) = self.gamma {
            kernel::check_gamma(g)?;
        }
        if !(self.kkt_tolerance > 0.0) || self.max_passes == 0 {
            return Err(SvmError::InvalidConfig(
                "kkt_tolerance and max_passes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub c_reg: f64,
    pub bias: f64,
    pub platt: Option<PlattParams>,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
}

fn check_labels(x: ArrayView2<f64>, y: &[f64]) -> Result<(), SvmError> {
    if x.nrows() != y.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::DegenerateData("labels must be +1 or -1".into()));
    }
    if x.nrows() < 2 || !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(SvmError::DegenerateData(
            "training data needs at least one example of each class".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SvmError::DegenerateData("non-finite feature value".into()));
    }
    Ok(())
}

/// Trains on rows of `x` with labels `y` in {+1, -1}.
pub fn train_smo(
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &SvmTrainConfig,
) -> Result<SvmModel, SvmError> {
    cfg.validate()?;
    check_labels(x, y)?;
    let gamma = cfg.resolved_gamma(x.ncols());
    let k = rbf_gram(x, gamma);
    let sol = solve_dual(
        k.view(),
        y,
        cfg.c_reg,
        cfg.kkt_tolerance,
        cfg.max_passes.saturating_mul(y.len()),
    )?;
    Ok(SvmModel::from_dual(x, y, &sol, gamma, cfg.c_reg))
}

impl SvmModel {
    pub fn from_dual(
        x: ArrayView2<f64>,
        y: &[f64],
        sol: &DualSolution,
        gamma: f64,
        c_reg: f64,
    ) -> Self {
        let mut support_vectors = Vec::new();
        let mut dual_coefs = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(x.row(i).to_vec());
                dual_coefs.push(a * y[i]);
            }
        }
        Self {
            gamma,
            c_reg,
            bias: sol.bias,
            platt: None,
            support_vectors,
            dual_coefs,
        }
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    fn sv_matrix(&self) -> Array2<f64> {
        let d = self.dim();
        let flat: Vec<f64> = self.support_vectors.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.support_vectors.len(), d), flat)
            .expect("support vectors share one width")
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64, SvmError> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        Ok(self.decision_values(x)?[0])
    }

    pub fn decision_values(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, SvmError> {
        if self.support_vectors.is_empty() {
            return Ok(vec![self.bias; x.nrows()]);
        }
        if x.ncols() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let k = rbf_cross(x, self.sv_matrix().view(), self.gamma);
        Ok(k.rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .zip(&self.dual_coefs)
                    .map(|(k, c)| k * c)
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }

    /// Probability of the positive class; errors on an uncalibrated model.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, SvmError> {
        let p = self.platt.ok_or(SvmError::Uncalibrated)?;
        Ok(p.probability(self.decision_value(x)?))
    }

    pub fn predict_proba_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, SvmError> {
        let p = self.platt.ok_or(SvmError::Uncalibrated)?;
        Ok(self
            .decision_values(x)?
            .into_iter()
            .map(|f| p.probability(f))
            .collect())
    }

    pub fn to_json(&self) -> Result<String, SvmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SvmError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SvmError> {
        std::fs::write(path, self.to_json()?).map_err(|source| SvmError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SvmError> {
        let text = std::fs::read_to_string(path).map_err(|source| SvmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Returns a copy of `model` with Platt parameters fitted on held-out rows.
pub fn platt_calibrate(
    model: &SvmModel,
    x: ArrayView2<f64>,
    y: &[f64],
) -> Result<SvmModel, SvmError> {
    check_labels(x, y)?;
    let scores = model.decision_values(x)?;
    let positive: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
    let mut out = model.clone();
    out.platt = Some(fit_platt(&scores, &positive)?);
    Ok(out)
}

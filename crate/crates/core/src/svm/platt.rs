//! Sigmoid calibration of decision values, `p = 1 / (1 + exp(a f + b))`,
//! with `p` the probability of the positive class. A tiny ridge on `a`
//! keeps the fit finite when the held-out scores separate the classes.

use serde::{Deserialize, Serialize};

use super::SvmError;

pub const PLATT_SLOPE_RIDGE: f64 = 1e-3;
const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        // both branches avoid overflow in exp
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood with targets `t` in {0, 1}.
fn objective(scores: &[f64], t: &[f64], a: f64, b: f64, ridge: f64) -> f64 {
    scores
        .iter()
        .zip(t)
        .map(|(f, t)| {
            let z = a * f + b;
            softplus(z) - (1.0 - t) * z
        })
        .sum::<f64>()
        + 0.5 * ridge * a * a
}

fn newton(
    scores: &[f64],
    t: &[f64],
    mut a: f64,
    mut b: f64,
    fit_a: bool,
) -> Result<PlattParams, SvmError> {
    let ridge = if fit_a { PLATT_SLOPE_RIDGE } else { 0.0 };
    let mut fval = objective(scores, t, a, b, ridge);
    for _ in 0..MAX_ITER {
        let (mut ga, mut gb) = (ridge * a, 0.0);
        let (mut haa, mut hab, mut hbb) = (ridge + 1e-12, 0.0, 1e-12);
        for (f, t) in scores.iter().zip(t) {
            let p = PlattParams { a, b }.probability(*f);
            let w = p * (1.0 - p);
            ga += f * (t - p);
            gb += t - p;
            haa += f * f * w;
            hab += f * w;
            hbb += w;
        }
        if !fit_a {
            ga = 0.0;
            haa = 1.0;
            hab = 0.0;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(-hab * ga + haa * gb) / det;
        let slope = ga * da + gb * db;
        // half the squared Newton decrement bounds the remaining decrease
        if -0.5 * slope <= 1e-12 * (1.0 + fval.abs()) {
            return Ok(PlattParams { a, b });
        }
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(scores, t, na, nb, ridge);
            if nf <= fval + 1e-4 * step * slope {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                return Err(SvmError::CalibrationFailed {
                    a,
                    b,
                    reason: "line search failed".into(),
                });
            }
        }
    }
    Err(SvmError::CalibrationFailed {
        a,
        b,
        reason: format!("no convergence in {MAX_ITER} Newton iterations"),
    })
}

/// Fits the sigmoid to decision values `scores` with labels `positive`.
/// The slope is constrained to `a ≤ 0`; when the unconstrained fit has
/// `a > 0` the slope is fixed at zero and only `b` is refitted.
pub fn fit_platt(scores: &[f64], positive: &[bool]) -> Result<PlattParams, SvmError> {
    if scores.len() != positive.len() {
        return Err(SvmError::DimensionMismatch {
            expected: scores.len(),
            actual: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return Err(SvmError::DegenerateData(
            "calibration data needs both classes".into(),
        ));
    }
    if scores.iter().any(|f| !f.is_finite()) {
        return Err(SvmError::DegenerateData("non-finite decision value".into()));
    }
    let t: Vec<f64> = positive
        .iter()
        .map(|&p| if p { 1.0 } else { 0.0 })
        .collect();
    let prior = ((positive.len() - n_pos) as f64 / n_pos as f64).ln();
    let fit = newton(scores, &t, 0.0, prior, true)?;
    if fit.a <= 0.0 {
        return Ok(fit);
    }
    newton(scores, &t, 0.0, prior, false)
}

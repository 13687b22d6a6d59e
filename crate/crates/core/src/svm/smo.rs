//! Sequential minimal optimization for the C-SVM dual
//!
//! ```text
//! min_a  ½ aᵀQa − eᵀa   s.t.  0 ≤ a_i ≤ C,  yᵀa = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Working pairs are chosen as the maximal violating pair; the gradient
//! `G = Qa − e` is maintained incrementally.

use ndarray::ArrayView2;

use super::SvmError;

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Final maximal KKT violation `m(a) − M(a)`.
    pub gap: f64,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Solves the dual for a precomputed kernel matrix. Stops once the maximal
/// violation drops below `tol` or after `max_iter` pair updates.
pub fn solve_dual(
    k: ArrayView2<f64>,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution, SvmError> {
    let n = y.len();
    if k.dim() != (n, n) {
        return Err(SvmError::DimensionMismatch {
            expected: n,
            actual: k.nrows(),
        });
    }
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let mut iterations = 0;
    let gap = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            if in_up(y[t], alpha[t], c) && -y[t] * g[t] >= gmax {
                gmax = -y[t] * g[t];
                i = t;
            }
            if in_low(y[t], alpha[t], c) && y[t] * g[t] >= gmax2 {
                gmax2 = y[t] * g[t];
                j = t;
            }
        }
        let gap = gmax + gmax2;
        if gap < tol || i == usize::MAX || j == usize::MAX {
            break gap.max(0.0);
        }
        if iterations >= max_iter {
            return Err(SvmError::NotConverged { iterations, gap });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kii = k[[i, i]];
        let kjj = k[[j, j]];
        let kij = k[[i, j]];
        if y[i] != y[j] {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[[t, i]] * di + y[j] * k[[t, j]] * dj);
        }
    };

    // offset from the free vectors, else the midpoint of the feasible range
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free_sum += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        0.5 * (upper + lower)
    };
    Ok(DualSolution {
        alpha,
        bias: -rho,
        iterations,
        gap,
    })
}

/// Indices violating their KKT case at tolerance `tol`:
/// `a = 0 ⇒ y f ≥ 1 − tol`, `0 < a < C ⇒ |y f − 1| ≤ tol`, `a = C ⇒ y f ≤ 1 + tol`.
pub fn kkt_violations(
    k: ArrayView2<f64>,
    y: &[f64],
    alpha: &[f64],
    bias: f64,
    c: f64,
    tol: f64,
) -> Vec<usize> {
    let n = y.len();
    let bound_eps = 1e-12 * c.max(1.0);
    (0..n)
        .filter(|&t| {
            let f: f64 = (0..n).map(|s| alpha[s] * y[s] * k[[t, s]]).sum::<f64>() + bias;
            let m = y[t] * f;
            if alpha[t] <= bound_eps {
                m < 1.0 - tol
            } else if alpha[t] >= c - bound_eps {
                m > 1.0 + tol
            } else {
                (m - 1.0).abs() > tol
            }
        })
        .collect()
}

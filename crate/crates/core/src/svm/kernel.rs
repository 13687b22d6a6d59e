use ndarray::{Array2, ArrayView1, ArrayView2};

use super::SvmError;

/// `exp(-gamma * ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    check_gamma(gamma)?;
    Ok(rbf(ArrayView1::from(x), ArrayView1::from(y), gamma))
}

pub(crate) fn check_gamma(gamma: f64) -> Result<(), SvmError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SvmError::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(())
}

pub(crate) fn rbf(x: ArrayView1<f64>, y: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn rbf_cross(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let na: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut k = a.dot(&b.t());
    for ((i, j), v) in k.indexed_iter_mut() {
        let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * d2).exp();
    }
    k
}

/// Symmetric Gram matrix of the rows of `x`, unit diagonal.
pub fn rbf_gram(x: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in 0..i {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn identical_points_give_one() {
        assert_eq!(
            rbf_kernel(&[1.0, -2.0, 3.5], &[1.0, -2.0, 3.5], 0.7).unwrap(),
            1.0
        );
    }

    #[test]
    fn half_gamma_distance_two() {
        let k = rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn random_pair_matches_scalar_loop() {
        let mut rng = seeded(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut d2 = 0.0;
            for i in 0..7 {
                d2 += (x[i] - y[i]) * (x[i] - y[i]);
            }
            assert!((rbf_kernel(&x, &y, 1.0).unwrap() - (-d2).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            rbf_kernel(&[1.0], &[1.0, 2.0], 1.0),
            Err(SvmError::DimensionMismatch { .. })
        ));
        assert!(rbf_kernel(&[1.0], &[1.0], 0.0).is_err());
        assert!(rbf_kernel(&[1.0], &[1.0], f64::NAN).is_err());
    }

    #[test]
    fn cross_matches_gram() {
        let mut rng = seeded(6);
        let x = Array2::from_shape_fn((9, 4), |_| rng.random_range(-1.0..1.0));
        let g = rbf_gram(x.view(), 0.8);
        let c = rbf_cross(x.view(), x.view(), 0.8);
        for (a, b) in g.iter().zip(c.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_has_no_negative_eigenvalues() {
        let mut rng = seeded(7);
        for trial in 0..30 {
            let n = 2 + trial % 7;
            let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
            let g = rbf_gram(x.view(), rng.random_range(0.1..3.0));
            for ev in jacobi_eigenvalues(g) {
                assert!(ev > -1e-8, "eigenvalue {ev}");
            }
        }
    }

    /// Cyclic Jacobi rotations; adequate for the small symmetric matrices
    /// used here.
    fn jacobi_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[[i, j]].powi(2))
                .sum();
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[[i, i]]).collect()
    }
}

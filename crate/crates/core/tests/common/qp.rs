//! Dense reference solver for the C-SVM dual: accelerated projected
//! gradient over the box intersected with the equality hyperplane.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use ser_adapt::rng::{seeded, SeedRng};
use ser_adapt::svm::{kkt_violations, rbf_cross, rbf_gram, solve_dual, train_smo, SvmTrainConfig};

/// Euclidean projection of `v` onto `{0 <= a <= c, y.a = 0}` by bisection on
/// the multiplier of the equality constraint.
pub fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c))
            .collect()
    };
    let h = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Minimizes `½ aᵀQa − Σa` with FISTA and gradient-based restarts.
pub fn solve_dual_qp(k: ArrayView2<f64>, y: &[f64], c: f64, iterations: usize) -> Vec<f64> {
    let n = y.len();
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * k[[i, j]]);
    let lipschitz = (0..n)
        .map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q[[i, j]] * a[j]).sum::<f64>() - 1.0)
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g = grad(&z);
        let cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&cand, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart momentum when it points uphill
        let uphill: f64 = (0..n).map(|i| (z[i] - next[i]) * (next[i] - x[i])).sum();
        if uphill > 0.0 {
            t = 1.0;
            z = next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            z = (0..n).map(|i| next[i] + beta * (next[i] - x[i])).collect();
            t = t_next;
        }
        x = next;
    }
    x
}

/// `sum_j a_j y_j K_ij` for every training point.
pub fn kernel_part(k: ArrayView2<f64>, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| (0..y.len()).map(|j| alpha[j] * y[j] * k[[i, j]]).sum())
        .collect()
}

/// Interval of offsets minimizing the hinge sum `Σ max(0, 1 − y_i (g_i + b))`.
/// The minimizer of a convex piecewise-linear function lies between
/// breakpoints `b = y_i − g_i`.
pub fn hinge_offset_interval(g: &[f64], y: &[f64]) -> (f64, f64) {
    let hinge = |b: f64| -> f64 {
        g.iter()
            .zip(y)
            .map(|(gi, yi)| (1.0 - yi * (gi + b)).max(0.0))
            .sum()
    };
    let breaks: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| yi - gi).collect();
    let values: Vec<f64> = breaks.iter().map(|&b| hinge(b)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-7 * (1.0 + best);
    let on_min: Vec<f64> = breaks
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v <= best + tol)
        .map(|(b, _)| *b)
        .collect();
    let lo = on_min.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = on_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub struct Instance {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub c: f64,
    pub gamma: f64,
}

/// Random instance with 2..=10 points, both classes present.
pub fn random_instance(rng: &mut SeedRng) -> Instance {
    let n = rng.random_range(2..=10);
    let d = rng.random_range(1..=4);
    let mut y: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let x = Array2::from_shape_fn((n, d), |(i, _)| 0.6 * y[i] + rng.random_range(-1.0..1.0));
    let c = [0.1, 0.5, 1.0, 3.0, 10.0][rng.random_range(0..5)];
    let gamma = rng.random_range(0.2..2.0);
    Instance { x, y, c, gamma }
}

/// Largest gap between SMO and oracle decision values over the training
/// points and random probes.
pub fn oracle_gap(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let inst = random_instance(&mut rng);
    let cfg = SvmTrainConfig {
        c_reg: inst.c,
        gamma: Some(inst.gamma),
        kkt_tolerance: 1e-6,
        max_passes: 100_000,
    };
    let model = train_smo(inst.x.view(), &inst.y, &cfg).unwrap();
    let k = rbf_gram(inst.x.view(), inst.gamma);
    let alpha = solve_dual_qp(k.view(), &inst.y, inst.c, 20_000);
    let g = kernel_part(k.view(), &inst.y, &alpha);
    // the offset is only determined up to an interval when no multiplier is free
    let (lo, hi) = hinge_offset_interval(&g, &inst.y);
    let b = model.bias.clamp(lo, hi);

    let probes = Array2::from_shape_fn((12, inst.x.ncols()), |_| rng.random_range(-2.0..2.0));
    let kp = rbf_cross(probes.view(), inst.x.view(), inst.gamma);
    let oracle_probe: Vec<f64> = kp
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(&alpha)
                .zip(&inst.y)
                .map(|((k, a), y)| k * a * y)
                .sum::<f64>()
                + b
        })
        .collect();
    let smo_train = model.decision_values(inst.x.view()).unwrap();
    let smo_probe = model.decision_values(probes.view()).unwrap();
    let train_gap = smo_train.iter().zip(&g).map(|(s, o)| (s - (o + b)).abs());
    let probe_gap = smo_probe
        .iter()
        .zip(&oracle_probe)
        .map(|(s, o)| (s - o).abs());
    train_gap.chain(probe_gap).fold(0.0, f64::max)
}

/// Solves `inst` with SMO at `tol` and audits the KKT conditions at `tol`.
pub fn kkt_clean(inst: &Instance, tol: f64) -> bool {
    let k = rbf_gram(inst.x.view(), inst.gamma);
    let sol = solve_dual(k.view(), &inst.y, inst.c, tol, 1_000_000).unwrap();
    kkt_violations(k.view(), &inst.y, &sol.alpha, sol.bias, inst.c, tol).is_empty()
}

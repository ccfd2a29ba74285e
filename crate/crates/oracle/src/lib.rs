//! Slow, independent reference computations for cross-checking
//! `neuron_landscape`: finite differences, brute-force norm maxima, naive
//! Monte Carlo and midpoint-grid population integrals.
//!
//! Nothing here calls the primary crate's reductions, samplers or quadrature.
//! It only borrows the model definitions (activations, label functions).

use neuron_landscape::activations::Activation;
use neuron_landscape::instances::LabelModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Central differences with step `step` in every coordinate.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            x[i] = w[i] + step;
            let a = f(&x);
            x[i] = w[i] - step;
            let b = f(&x);
            x[i] = w[i];
            (a - b) / (2.0 * step)
        })
        .collect()
}

/// Dense central-difference Hessian, symmetrized.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], step: f64) -> Vec<Vec<f64>> {
    let d = w.len();
    let mut h = vec![vec![0.0; d]; d];
    for i in 0..d {
        let gi = |x: &[f64]| fd_gradient(&f, x, step)[i];
        let row = fd_gradient(gi, w, step);
        for j in 0..d {
            h[i][j] += 0.5 * row[j];
            h[j][i] += 0.5 * row[j];
        }
    }
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖u‖_w` written out directly from its definition.
pub fn weighted_norm_direct(u: &[f64], w: &[f64]) -> f64 {
    let nw2 = dot(w, w);
    let nw = nw2.sqrt();
    let c = dot(u, w) / nw2;
    let par: f64 = w.iter().map(|x| (c * x).powi(2)).sum::<f64>().sqrt();
    let perp: f64 = u.iter().zip(w).map(|(a, b)| (a - c * b).powi(2)).sum::<f64>().sqrt();
    par / nw.powf(1.5) + perp / nw.sqrt()
}

/// Lower bound on the dual of `‖·‖_w` at `v`: the largest `v·u` over
/// `n_dirs` random directions plus the two pure directions (along `w`,
/// and along the part of `v` orthogonal to `w`), each rescaled to `‖u‖_w = 1`.
pub fn dual_norm_bruteforce(v: &[f64], w: &[f64], n_dirs: usize, seed: u64) -> f64 {
    let d = v.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let mut consider = |u: &[f64]| {
        let q = weighted_norm_direct(u, w);
        if q > 0.0 && q.is_finite() {
            best = best.max(dot(v, u) / q).max(-dot(v, u) / q);
        }
    };
    consider(w);
    let c = dot(v, w) / dot(w, w);
    let perp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - c * b).collect();
    consider(&perp);
    for _ in 0..n_dirs {
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        consider(&u);
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub quantity: String,
    pub primary_value: f64,
    pub oracle_value: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tolerance {
    Absolute,
    Relative,
}

/// Compares two independent evaluations of one quantity.
pub fn cross_oracle(quantity: &str, primary: f64, oracle: f64, tolerance: f64, kind: Tolerance) -> OracleReport {
    let abs_diff = (primary - oracle).abs();
    let rel_diff = abs_diff / primary.abs().max(oracle.abs()).max(f64::MIN_POSITIVE);
    let used = match kind {
        Tolerance::Absolute => abs_diff,
        Tolerance::Relative => rel_diff,
    };
    OracleReport {
        quantity: quantity.to_string(),
        primary_value: primary,
        oracle_value: oracle,
        abs_diff,
        rel_diff,
        tolerance,
        pass: used <= tolerance,
    }
}

/// Largest relative coordinate gap between two vectors, scaled by the
/// larger of their norms.
pub fn vector_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = dot(a, a).sqrt().max(dot(b, b).sqrt()).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// `(1/2) E[(σ(w·x) − y)²]` under a standard gaussian by plain Monte Carlo
/// with its own sampler. Returns the estimate and its standard error.
pub fn mc_gaussian_loss(labels: &LabelModel, act: &Activation, w: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_0f_0a11);
    let d = w.len();
    let mut x = vec![0.0; d];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        for xi in x.iter_mut() {
            *xi = rng.sample(StandardNormal);
        }
        let [(a, pa), (b, pb)] = labels.outcomes(&x);
        let y = if pb > 0.0 && rng.gen::<f64>() >= pa { b } else { a };
        let r = act.eval(dot(w, &x)) - y;
        let l = 0.5 * r * r;
        s += l;
        s2 += l * l;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Same quantity by a midpoint rule on `[-half, half]^d` (d ≤ 2) with `cells`
/// cells per axis, for a product marginal with one-dimensional density `dens`.
pub fn grid_loss(
    labels: &LabelModel,
    act: &Activation,
    w: &[f64],
    dens: impl Fn(f64) -> f64,
    half: f64,
    cells: usize,
) -> f64 {
    let h = 2.0 * half / cells as f64;
    let mid = |k: usize| -half + (k as f64 + 0.5) * h;
    let point = |x: &[f64]| -> f64 {
        let s = act.eval(dot(w, x));
        labels.outcomes(x).iter().map(|&(y, p)| p * 0.5 * (s - y) * (s - y)).sum()
    };
    match w.len() {
        1 => (0..cells).map(|i| point(&[mid(i)]) * dens(mid(i)) * h).sum(),
        2 => {
            let mut total = 0.0;
            for i in 0..cells {
                let mut row = 0.0;
                for j in 0..cells {
                    row += point(&[mid(i), mid(j)]) * dens(mid(j));
                }
                total += row * dens(mid(i)) * h * h;
            }
            total
        }
        d => panic!("grid_loss supports d ≤ 2, got {d}"),
    }
}

pub fn std_normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_half_square_norm() {
        let g = fd_gradient(|w| 0.5 * dot(w, w), &[1.0, -2.0, 0.5], 1e-5);
        for (a, b) in g.iter().zip([1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(fd_gradient(|_| 3.0, &[1.0, 2.0], 1e-3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        let h = fd_hessian(|w| w[0] * w[0] + 3.0 * w[0] * w[1], &[0.2, 0.4], 1e-4);
        assert!((h[0][0] - 2.0).abs() < 1e-5);
        assert!((h[0][1] - 3.0).abs() < 1e-5);
        assert!((h[1][1]).abs() < 1e-5);
    }

    #[test]
    fn dual_of_zero_is_zero() {
        assert_eq!(dual_norm_bruteforce(&[0.0, 0.0], &[1.0, 2.0], 100, 1), 0.0);
    }
}

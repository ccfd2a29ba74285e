//! Square loss `F(w) = ½ E[(σ(w·x) − y)²]`, its ℓ2-regularized version
//! `F_ρ = F + (ρ/2)‖w‖²`, label truncation, gradients, and two population
//! oracles (Monte Carlo and breakpoint-split quadrature).

use serde::{Deserialize, Serialize};

use crate::activations::{Activation, SigmoidalActivation};
use crate::distributions::{sample_rows, MarginalSpec};
use crate::error::{Error, Result};
use crate::instances::{LabelModel, LabeledDataset};
use crate::numeric::{dot, norm2, reduce_rows, Matrix};
use crate::quadrature::{expect, expect_adaptive, Line, QuadRule};
use crate::rng::{Domain, RowKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub act: Activation,
    pub rho: f64,
    pub trunc_m: Option<f64>,
}

impl LossSpec {
    pub fn plain(act: Activation) -> Self {
        Self { act, rho: 0.0, trunc_m: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho = {} must be ≥ 0", self.rho)));
        }
        if let Some(m) = self.trunc_m {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("trunc_M = {m} must be > 0")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn tr(&self, y: f64) -> f64 {
        match self.trunc_m {
            Some(m) => truncate(y, m),
            None => y,
        }
    }
}

#[inline]
pub fn truncate(y: f64, m: f64) -> f64 {
    if y.abs() <= m {
        y
    } else {
        m.copysign(y)
    }
}

/// `sign(y) · min(|y|, M)` elementwise.
pub fn truncate_labels(y: &[f64], m: f64) -> Result<Vec<f64>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("M = {m} must be > 0")));
    }
    Ok(y.iter().map(|&v| truncate(v, m)).collect())
}

fn check_dims(x: &Matrix, y: &[f64], w: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimMismatch { expected: x.rows(), got: y.len() });
    }
    if x.cols() != w.len() {
        return Err(Error::DimMismatch { expected: x.cols(), got: w.len() });
    }
    Ok(())
}

fn first_bad_row(x: &Matrix, y: &[f64], spec: &LossSpec, w: &[f64]) -> usize {
    (0..y.len())
        .find(|&i| {
            let t = dot(w, x.row(i));
            let r = spec.act.eval(t) - spec.tr(y[i]);
            !(r * r).is_finite() || !spec.act.deriv(t).is_finite()
        })
        .unwrap_or(0)
}

/// Loss and gradient in one pass over the rows.
pub fn loss_and_gradient(x: &Matrix, y: &[f64], spec: &LossSpec, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dims(x, y, w)?;
    let d = w.len();
    let n = y.len();
    let acc = reduce_rows(n, d + 1, |i, acc| {
        let xi = x.row(i);
        let t = dot(w, xi);
        let r = spec.act.eval(t) - spec.tr(y[i]);
        acc[0] += r * r;
        let g = r * spec.act.deriv(t);
        for j in 0..d {
            acc[j + 1] += g * xi[j];
        }
    });
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { what: "loss", index: first_bad_row(x, y, spec, w) });
    }
    let nn = n as f64;
    let loss = 0.5 * acc[0] / nn + 0.5 * spec.rho * dot(w, w);
    let grad = (0..d).map(|j| acc[j + 1] / nn + spec.rho * w[j]).collect();
    Ok((loss, grad))
}

/// Loss only; cheaper than [`loss_and_gradient`].
pub fn loss_only(x: &Matrix, y: &[f64], spec: &LossSpec, w: &[f64]) -> Result<f64> {
    check_dims(x, y, w)?;
    let acc = reduce_rows(y.len(), 1, |i, acc| {
        let r = spec.act.eval(dot(w, x.row(i))) - spec.tr(y[i]);
        acc[0] += r * r;
    });
    if !acc[0].is_finite() {
        return Err(Error::Overflow { what: "loss", index: first_bad_row(x, y, spec, w) });
    }
    Ok(0.5 * acc[0] / y.len() as f64 + 0.5 * spec.rho * dot(w, w))
}

/// `(1/2n) Σ (σ(w·x_i) − tr(y_i))² + (ρ/2)‖w‖²`.
pub fn empirical_loss(ds: &LabeledDataset, spec: &LossSpec, w: &[f64]) -> Result<f64> {
    loss_only(&ds.x, &ds.y, spec, w)
}

/// `(1/n) Σ (σ(w·x_i) − tr(y_i)) σ'(w·x_i) x_i + ρ w`.
pub fn empirical_gradient(ds: &LabeledDataset, spec: &LossSpec, w: &[f64]) -> Result<Vec<f64>> {
    loss_and_gradient(&ds.x, &ds.y, spec, w).map(|p| p.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
}

/// Monte-Carlo estimate of `F_ρ(w)` from `n_mc` fresh rows of the model.
///
/// Rows come from the `(seed, Probe)` stream, so two calls with the same
/// seed see the same sample.
pub fn population_loss_mc(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    w: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc < 1000 {
        return Err(Error::InvalidParameter(format!("n_mc = {n_mc} must be at least 1000")));
    }
    if w.len() != marginal.dim {
        return Err(Error::DimMismatch { expected: marginal.dim, got: w.len() });
    }
    let key = RowKey::new(seed, Domain::Probe);
    let block = 1 << 16;
    let mut sums = vec![0.0; 2];
    let mut start = 0usize;
    while start < n_mc {
        let m = block.min(n_mc - start);
        let x = sample_rows(marginal, start as u64, m, &key);
        let part = reduce_rows(m, 2, |i, acc| {
            let xi = x.row(i);
            let y = spec.tr(labels.label(xi, (start + i) as u64));
            let r = spec.act.eval(dot(w, xi)) - y;
            let l = 0.5 * r * r;
            acc[0] += l;
            acc[1] += l * l;
        });
        sums[0] += part[0];
        sums[1] += part[1];
        start += m;
    }
    let n = n_mc as f64;
    let mean = sums[0] / n;
    let var = (sums[1] / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(McEstimate { estimate: mean + 0.5 * spec.rho * dot(w, w), std_err: (var / n).sqrt() })
}

/// Monte-Carlo population gradient with per-coordinate standard errors.
pub fn population_gradient_mc(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    w: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if w.len() != marginal.dim {
        return Err(Error::DimMismatch { expected: marginal.dim, got: w.len() });
    }
    let key = RowKey::new(seed, Domain::Probe);
    let d = marginal.dim;
    let block = 1 << 16;
    let mut sums = vec![0.0; 2 * d];
    let mut start = 0usize;
    while start < n_mc {
        let m = block.min(n_mc - start);
        let x = sample_rows(marginal, start as u64, m, &key);
        let part = reduce_rows(m, 2 * d, |i, acc| {
            let xi = x.row(i);
            let y = spec.tr(labels.label(xi, (start + i) as u64));
            let t = dot(w, xi);
            let g = (spec.act.eval(t) - y) * spec.act.deriv(t);
            for j in 0..d {
                let v = g * xi[j];
                acc[j] += v;
                acc[d + j] += v * v;
            }
        });
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
        start += m;
    }
    let n = n_mc as f64;
    let mut grad = vec![0.0; d];
    let mut se = vec![0.0; d];
    for j in 0..d {
        let mean = sums[j] / n;
        let var = (sums[d + j] / n - mean * mean).max(0.0) * n / (n - 1.0);
        grad[j] = mean + spec.rho * w[j];
        se[j] = (var / n).sqrt();
    }
    Ok((grad, se))
}

fn quad_lines(labels: &LabelModel, spec: &LossSpec, w: &[f64]) -> Vec<Line> {
    let mut lines = labels.lines(w.len());
    if norm2(w) > 0.0 {
        for &k in spec.act.kinks() {
            lines.push(Line { a: w.to_vec(), c: k });
        }
    }
    lines
}

/// Population `F_ρ(w)` and `∇F_ρ(w)` by quadrature with a fixed rule.
pub fn population_loss_grad_quadrature(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    w: &[f64],
    rule: &QuadRule,
) -> Result<(f64, Vec<f64>)> {
    if w.len() != marginal.dim {
        return Err(Error::DimMismatch { expected: marginal.dim, got: w.len() });
    }
    let d = w.len();
    let lines = quad_lines(labels, spec, w);
    let acc = expect(marginal, &lines, rule, d + 1, |x, acc, wt| {
        let t = dot(w, x);
        let s = spec.act.eval(t);
        let ds = spec.act.deriv(t);
        for (y, p) in labels.outcomes(x) {
            if p == 0.0 {
                continue;
            }
            let r = s - spec.tr(y);
            acc[0] += wt * p * 0.5 * r * r;
            let g = wt * p * r * ds;
            for j in 0..d {
                acc[j + 1] += g * x[j];
            }
        }
    })?;
    let loss = acc[0] + 0.5 * spec.rho * dot(w, w);
    let grad = (0..d).map(|j| acc[j + 1] + spec.rho * w[j]).collect();
    Ok((loss, grad))
}

/// Population `F_ρ(w)` by adaptive quadrature (absolute tolerance 1e-8).
/// Gaussian or uniform-box marginals of dimension 1 or 2 only.
pub fn population_loss_quadrature(marginal: &MarginalSpec, labels: &LabelModel, spec: &LossSpec, w: &[f64]) -> Result<f64> {
    if w.len() != marginal.dim {
        return Err(Error::DimMismatch { expected: marginal.dim, got: w.len() });
    }
    if marginal.dim > 2 {
        return Err(Error::Unsupported(format!("quadrature in dimension {}", marginal.dim)));
    }
    let lines = quad_lines(labels, spec, w);
    let acc = expect_adaptive(marginal, &lines, &QuadRule::new(0.5, 10), 1e-8, 1, |x, acc, wt| {
        let s = spec.act.eval(dot(w, x));
        for (y, p) in labels.outcomes(x) {
            let r = s - spec.tr(y);
            acc[0] += wt * p * 0.5 * r * r;
        }
    })?;
    Ok(acc[0] + 0.5 * spec.rho * dot(w, w))
}

/// Constant in the tighter branch of [`param_vs_loss_bound`].
pub const PARAM_BOUND_C: f64 = 8.0;

/// Upper bound on `E[(σ(w·x) − σ(v·x))²]`.
///
/// Always `ξ²‖w − v‖²`. When `θ(w, v) < π/4`, `‖w‖ > 2/R` and with
/// `δ = max(1, ‖w‖/‖v‖)`, also `C ξ² δ³ / (L⁴ μ³) · ‖w − v‖_w²`; the smaller
/// applicable value is returned.
pub fn param_vs_loss_bound(act: &SigmoidalActivation, l: f64, r: f64, w: &[f64], v: &[f64]) -> Result<f64> {
    if w.len() != v.len() {
        return Err(Error::DimMismatch { expected: v.len(), got: w.len() });
    }
    let diff: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - b).collect();
    let dn = norm2(&diff);
    let mut best = act.xi * act.xi * dn * dn;
    let (nw, nv) = (norm2(w), norm2(v));
    if nw > 2.0 / r && nv > 0.0 && crate::numeric::angle(w, v) < std::f64::consts::FRAC_PI_4 {
        let delta = (nw / nv).max(1.0);
        let wv = crate::norms::WeightVector::new(w.to_vec())?;
        let q = crate::norms::weighted_norm(&diff, &wv)?;
        let tight = PARAM_BOUND_C * act.xi * act.xi * delta.powi(3) / (l.powi(4) * act.mu.powi(3)) * q * q;
        best = best.min(tight);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{builtin, builtin_sigmoidal};
    use crate::instances::{make_realizable, Base};

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate_labels(&[7.0, -7.0, 3.0], 5.0).unwrap(), vec![5.0, -5.0, 3.0]);
        assert_eq!(truncate_labels(&[1.0, -2.0], 5.0).unwrap(), vec![1.0, -2.0]);
        assert_eq!(truncate_labels(&[0.0], 5.0).unwrap(), vec![0.0]);
        assert!(truncate_labels(&[0.0], 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let g = MarginalSpec::gaussian(3);
        let act = builtin("tanh", None).unwrap();
        let w_star = [0.5, -1.0, 0.2];
        let ds = make_realizable(&g, &act, &w_star, 500, 3).unwrap();
        let spec = LossSpec::plain(act.clone());
        assert_eq!(empirical_loss(&ds, &spec, &w_star).unwrap(), 0.0);
        assert!(empirical_gradient(&ds, &spec, &w_star).unwrap().iter().all(|v| *v == 0.0));
        let energy: f64 = ds.y.iter().map(|y| y * y).sum::<f64>() / (2.0 * 500.0);
        let l0 = empirical_loss(&ds, &spec, &[0.0; 3]).unwrap();
        assert!((l0 - energy).abs() < 1e-14);
        let w = [0.3, 0.1, -0.4];
        let reg = LossSpec { rho: 0.7, ..spec.clone() };
        let a = empirical_loss(&ds, &spec, &w).unwrap();
        let b = empirical_loss(&ds, &reg, &w).unwrap();
        assert!((b - a - 0.35 * dot(&w, &w)).abs() < 1e-14);
        let ga = empirical_gradient(&ds, &spec, &w).unwrap();
        let gb = empirical_gradient(&ds, &reg, &w).unwrap();
        for j in 0..3 {
            assert_eq!(gb[j], ga[j] + 0.7 * w[j]);
        }
    }

    #[test]
    fn overflow_reports_row() {
        let g = MarginalSpec::gaussian(1);
        let act = builtin("relu", None).unwrap();
        let mut ds = make_realizable(&g, &act, &[1.0], 10, 1).unwrap();
        ds.y[7] = f64::MAX;
        ds.y[8] = -f64::MAX;
        let err = empirical_loss(&ds, &LossSpec::plain(act), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Overflow { index: 7, .. }));
    }

    #[test]
    fn steep_ramp_loss_near_half() {
        let g = MarginalSpec::gaussian(2);
        let zero = LabelModel::clean(Base::Neuron { act: builtin("relu", None).unwrap(), w_star: vec![0.0, 0.0] });
        let spec = LossSpec::plain(builtin("ramp", None).unwrap());
        let f = population_loss_quadrature(&g, &zero, &spec, &[1e3, 0.0]).unwrap();
        // ½(1 − ∫_{|x|<1e-3} (1 − 1e6 x²) φ(x) dx) to leading order.
        let want = 0.5 * (1.0 - 4e-3 / 3.0 / (2.0 * std::f64::consts::PI).sqrt());
        assert!((f - want).abs() < 1e-9, "{f} vs {want}");
    }

    #[test]
    fn param_bound_examples() {
        let a = builtin_sigmoidal("logistic").unwrap();
        assert_eq!(param_vs_loss_bound(&a, 0.05, 1.0, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let b = param_vs_loss_bound(&a, 0.05, 1.0, &[0.1, 0.0], &[0.0, 0.0]).unwrap();
        assert!((b - 0.01).abs() < 1e-15);
    }
}

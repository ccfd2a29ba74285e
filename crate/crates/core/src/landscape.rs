//! Stationarity verdicts, gradient-alignment measurements, radius scans,
//! loss-surface grids and Hessian probes over population losses.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::MarginalSpec;
use crate::error::{Error, Result};
use crate::instances::LabelModel;
use crate::loss::{population_gradient_mc, population_loss_grad_quadrature, population_loss_mc, LossSpec};
use crate::norms::{dual_weighted_norm, weighted_norm, WeightVector};
use crate::numeric::{dot, norm2, sub};
use crate::quadrature::QuadRule;

/// How population quantities are computed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Oracle {
    Quadrature { panel: f64, order: usize },
    /// Starts at `n` rows and doubles up to `max_n` when a precision target is set.
    MonteCarlo { n: usize, max_n: usize, seed: u64 },
}

impl Oracle {
    pub fn quadrature() -> Self {
        Oracle::Quadrature { panel: 0.25, order: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationPoint {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Per-coordinate standard error of `grad` (zero for quadrature).
    pub grad_se: Vec<f64>,
    pub n_mc: usize,
}

pub fn population_point(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    w: &[f64],
    oracle: &Oracle,
    n: Option<usize>,
) -> Result<PopulationPoint> {
    match oracle {
        Oracle::Quadrature { panel, order } => {
            let (loss, grad) = population_loss_grad_quadrature(marginal, labels, spec, w, &QuadRule::new(*panel, *order))?;
            let d = grad.len();
            Ok(PopulationPoint { loss, grad, grad_se: vec![0.0; d], n_mc: 0 })
        }
        Oracle::MonteCarlo { n: n0, seed, .. } => {
            let n = n.unwrap_or(*n0);
            let l = population_loss_mc(marginal, labels, spec, w, n, *seed)?;
            let (grad, grad_se) = population_gradient_mc(marginal, labels, spec, w, n, *seed)?;
            Ok(PopulationPoint { loss: l.estimate, grad, grad_se, n_mc: n })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NearOrigin,
    Far,
}

pub fn regime(w: &[f64], r: f64) -> Regime {
    if norm2(w) <= 2.0 / r {
        Regime::NearOrigin
    } else {
        Regime::Far
    }
}

/// `‖g‖₂` near the origin, `‖g‖_{*,w}` far from it.
pub fn regime_norm(g: &[f64], w: &[f64], r: f64) -> Result<f64> {
    match regime(w, r) {
        Regime::NearOrigin => Ok(norm2(g)),
        Regime::Far => dual_weighted_norm(g, &WeightVector::new(w.to_vec())?),
    }
}

/// Bound on how much the regime norm can amplify an ℓ2 error.
fn regime_gain(w: &[f64], r: f64) -> f64 {
    match regime(w, r) {
        Regime::NearOrigin => 1.0,
        Regime::Far => {
            let n = norm2(w);
            n.powf(1.5).max(n.sqrt())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationarityParams {
    pub c: f64,
    pub p: f64,
}

impl Default for StationarityParams {
    fn default() -> Self {
        Self { c: 0.01, p: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityVerdict {
    pub w: Vec<f64>,
    pub loss: f64,
    pub grad_l2: f64,
    pub grad_dual: Option<f64>,
    pub regime: Regime,
    pub threshold: f64,
    pub is_approx_stationary: bool,
    pub implied_loss_bound: f64,
    /// Standard error of the regime norm, bounded through the per-coordinate errors.
    pub norm_se: f64,
    pub n_mc: usize,
}

/// Stationarity test at `w`: regime norm of `∇F_ρ(w)` against `c√ε`.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_check(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    r: f64,
    kappa: f64,
    w: &[f64],
    eps: f64,
    params: &StationarityParams,
    oracle: &Oracle,
) -> Result<StationarityVerdict> {
    let threshold = params.c * eps.sqrt();
    let gain = regime_gain(w, r);
    let mut n = match oracle {
        Oracle::MonteCarlo { n, .. } => Some(*n),
        _ => None,
    };
    let pt = loop {
        let pt = population_point(marginal, labels, spec, w, oracle, n)?;
        let se = gain * norm2(&pt.grad_se);
        match (oracle, n) {
            (Oracle::MonteCarlo { max_n, .. }, Some(k)) if se > threshold / 10.0 => {
                if 2 * k > *max_n {
                    return Err(Error::Budget(format!(
                        "gradient standard error {se:.3e} above {:.3e} with {k} samples",
                        threshold / 10.0
                    )));
                }
                n = Some(2 * k);
            }
            _ => break pt,
        }
    };
    let reg = regime(w, r);
    let grad_l2 = norm2(&pt.grad);
    let grad_dual = WeightVector::new(w.to_vec()).ok().and_then(|wv| dual_weighted_norm(&pt.grad, &wv).ok());
    let norm = regime_norm(&pt.grad, w, r)?;
    Ok(StationarityVerdict {
        w: w.to_vec(),
        loss: pt.loss,
        grad_l2,
        grad_dual,
        regime: reg,
        threshold,
        is_approx_stationary: norm <= threshold,
        implied_loss_bound: eps * kappa.powf(-params.p),
        norm_se: gain * norm2(&pt.grad_se),
        n_mc: pt.n_mc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Case label, or `None` when no case's preconditions hold.
    pub case: Option<String>,
    pub inner: f64,
    pub norm: f64,
    pub ratio: f64,
    pub required: f64,
    pub pass: Option<bool>,
    pub note: String,
}

impl AlignmentReport {
    fn excluded(note: String) -> Self {
        Self { case: None, inner: f64::NAN, norm: f64::NAN, ratio: f64::NAN, required: f64::NAN, pass: None, note }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidalAlignmentParams {
    pub r: f64,
    pub kappa: f64,
    pub c_prime: f64,
}

/// Measured `∇F_ρ(w)·(w − w*)` (or `·w` in the outer case) against
/// `c'√ε` times the case's norm.
pub fn alignment_check_sigmoidal(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    params: &SigmoidalAlignmentParams,
    w: &[f64],
    w_star: &[f64],
    eps: f64,
    oracle: &Oracle,
) -> Result<AlignmentReport> {
    let SigmoidalAlignmentParams { r, kappa, c_prime } = *params;
    let nw = norm2(w);
    let diff = sub(w, w_star);
    let dist = norm2(&diff);
    let u = eps * norm2(w_star);
    let floor1 = eps.sqrt() / (c_prime * kappa.powi(5));
    let outer = c_prime * kappa / eps;
    let case = if nw <= 2.0 / r {
        if dist >= floor1 {
            Some(1)
        } else {
            None
        }
    } else if nw <= outer {
        let wv = WeightVector::new(w.to_vec())?;
        let qd = weighted_norm(&diff, &wv)?;
        if qd >= eps.sqrt() * u / (c_prime * kappa.powi(5)) || nw >= 2.0 * norm2(w_star) {
            Some(2)
        } else if nw >= outer / 2.0 {
            Some(3)
        } else {
            None
        }
    } else {
        Some(3)
    };
    let Some(case) = case else {
        return Ok(AlignmentReport::excluded(format!("no case applies at ‖w‖ = {nw:.4}, ‖w − w*‖ = {dist:.4}")));
    };
    let pt = population_point(marginal, labels, spec, w, oracle, None)?;
    let (inner, norm) = match case {
        1 => (dot(&pt.grad, &diff), dist),
        2 => (dot(&pt.grad, &diff), weighted_norm(&diff, &WeightVector::new(w.to_vec())?)?),
        _ => (dot(&pt.grad, w), weighted_norm(w, &WeightVector::new(w.to_vec())?)?),
    };
    let ratio = inner / (eps.sqrt() * norm);
    Ok(AlignmentReport {
        case: Some(format!("case{case}")),
        inner,
        norm,
        ratio,
        required: c_prime,
        pass: Some(ratio >= c_prime),
        note: String::new(),
    })
}

/// Constant in the noiseless alignment lower bound for unbounded activations.
pub const UNBOUNDED_ALIGNMENT: f64 = 7.0 / 64.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnboundedAlignmentParams {
    pub l: f64,
    pub r: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Constant in the distance floor `C λ √ε / (α² L R⁴)`.
    pub c_floor: f64,
}

/// Measured `∇F(w)·(w − w*) / (α² L R⁴ ‖w − w*‖²)` against `7/64` minus the
/// noise slack `2λ√ε / (α² L R⁴ ‖w − w*‖)`.
pub fn alignment_check_unbounded(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    params: &UnboundedAlignmentParams,
    w: &[f64],
    w_star: &[f64],
    eps: f64,
    oracle: &Oracle,
) -> Result<AlignmentReport> {
    let UnboundedAlignmentParams { l, r, alpha, lambda, c_floor } = *params;
    let scale = alpha * alpha * l * r.powi(4);
    let diff = sub(w, w_star);
    let dist = norm2(&diff);
    if dot(w, w_star) < 0.0 {
        return Ok(AlignmentReport::excluded("w·w* < 0".into()));
    }
    let floor = c_floor * lambda * eps.sqrt() / scale;
    if dist < floor || dist == 0.0 {
        return Ok(AlignmentReport::excluded(format!("‖w − w*‖ = {dist:.4e} below floor {floor:.4e}")));
    }
    let pt = population_point(marginal, labels, spec, w, oracle, None)?;
    let inner = dot(&pt.grad, &diff);
    let ratio = inner / (scale * dist * dist);
    let mc = norm2(&pt.grad_se) * 4.0 / (scale * dist);
    let required = UNBOUNDED_ALIGNMENT - 2.0 * lambda * eps.sqrt() / (scale * dist) - mc;
    Ok(AlignmentReport {
        case: Some("unbounded".into()),
        inner,
        norm: dist,
        ratio,
        required,
        pass: Some(ratio >= required),
        note: String::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusScan {
    pub points: Vec<(f64, f64)>,
    pub target: f64,
    pub first_t: Option<f64>,
}

/// `F(t·direction)` at `t = 0` and `n` geometric points up to `t_max`;
/// `first_t` is the smallest `t` with `F ≤ (1 + k·ξ/(μL))·ε`.
#[allow(clippy::too_many_arguments)]
pub fn radius_scan(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    l: f64,
    k: f64,
    eps: f64,
    direction: &[f64],
    t_max: f64,
    n: usize,
    oracle: &Oracle,
) -> Result<RadiusScan> {
    let sig = spec
        .act
        .as_sigmoidal()
        .ok_or_else(|| Error::InvalidParameter("radius scan needs a sigmoidal activation".into()))?;
    let nd = norm2(direction);
    if !(nd > 0.0) || !(t_max > 0.0) || n < 2 {
        return Err(Error::InvalidParameter("radius scan needs a nonzero direction, t_max > 0 and n ≥ 2".into()));
    }
    let dir: Vec<f64> = direction.iter().map(|v| v / nd).collect();
    let lo = t_max * 1e-3;
    let mut ts = vec![0.0];
    ts.extend((0..n).map(|i| lo * (t_max / lo).powf(i as f64 / (n - 1) as f64)));
    let target = (1.0 + k * sig.xi / (sig.mu * l)) * eps;
    let points: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| {
            let w: Vec<f64> = dir.iter().map(|v| v * t).collect();
            population_point(marginal, labels, spec, &w, oracle, None).map(|p| (t, p.loss))
        })
        .collect::<Result<_>>()?;
    let first_t = points.iter().find(|p| p.1 <= target).map(|p| p.0);
    Ok(RadiusScan { points, target, first_t })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub w: [f64; 2],
    pub f: f64,
    pub grad: [f64; 2],
}

/// Evaluates `F_ρ` and its gradient on a `res × res` grid of `[lo, hi]²`
/// (endpoints included), row-major with `w1` varying slowest.
pub fn grid_with_gradients(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    lo: f64,
    hi: f64,
    res: usize,
    oracle: &Oracle,
) -> Result<Vec<GridCell>> {
    if marginal.dim != 2 {
        return Err(Error::DimMismatch { expected: 2, got: marginal.dim });
    }
    if res < 2 || !(hi > lo) {
        return Err(Error::InvalidParameter(format!("grid needs res ≥ 2 and hi > lo, got {res}, [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (res - 1) as f64;
    (0..res * res)
        .into_par_iter()
        .map(|k| {
            let w = [lo + (k / res) as f64 * step, lo + (k % res) as f64 * step];
            let oc = match oracle {
                Oracle::MonteCarlo { n, max_n, seed } => {
                    Oracle::MonteCarlo { n: *n, max_n: *max_n, seed: crate::rng::child_seed(*seed, k as u64) }
                }
                o => o.clone(),
            };
            let p = population_point(marginal, labels, spec, &w, &oc, None)?;
            Ok(GridCell { w, f: p.loss, grad: [p.grad[0], p.grad[1]] })
        })
        .collect()
}

/// Grid rows `(w1, w2, F)`.
pub fn loss_surface_grid(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    lo: f64,
    hi: f64,
    res: usize,
    oracle: &Oracle,
) -> Result<Vec<[f64; 3]>> {
    Ok(grid_with_gradients(marginal, labels, spec, lo, hi, res, oracle)?
        .into_iter()
        .map(|c| [c.w[0], c.w[1], c.f])
        .collect())
}

pub fn write_grid_csv<W: std::io::Write>(rows: &[[f64; 3]], out: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
    wr.write_record(["w1", "w2", "F"]).map_err(io)?;
    for r in rows {
        wr.write_record(r.iter().map(|v| crate::numeric::fmt17(*v))).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryCell {
    pub cell: (usize, usize),
    pub grid_w: [f64; 2],
    pub refined_w: Vec<f64>,
    pub f: f64,
}

/// Discrete local minima of a grid (no neighbour lower, at least one
/// higher), with touching cells merged, each refined by 10 descent steps of
/// at most half a cell.
pub fn grid_stationary_cells(
    grid: &[GridCell],
    res: usize,
    marginal: &MarginalSpec,
    labels: &LabelModel,
    spec: &LossSpec,
    oracle: &Oracle,
) -> Result<Vec<StationaryCell>> {
    let at = |i: usize, j: usize| &grid[i * res + j];
    let cell = (at(1, 0).w[0] - at(0, 0).w[0]).abs();
    let neighbours = |i: usize, j: usize| {
        let mut v = Vec::with_capacity(8);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if (di, dj) != (0, 0) && a >= 0 && b >= 0 && a < res as i64 && b < res as i64 {
                    v.push((a as usize, b as usize));
                }
            }
        }
        v
    };
    let mut flagged = vec![false; res * res];
    for i in 0..res {
        for j in 0..res {
            let f = at(i, j).f;
            let nb = neighbours(i, j);
            if nb.iter().all(|&(a, b)| at(a, b).f >= f) && nb.iter().any(|&(a, b)| at(a, b).f > f) {
                flagged[i * res + j] = true;
            }
        }
    }
    let mut seen = vec![false; res * res];
    let mut out = Vec::new();
    for start in 0..res * res {
        if !flagged[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut best = start;
        while let Some(k) = stack.pop() {
            if grid[k].f < grid[best].f {
                best = k;
            }
            for (a, b) in neighbours(k / res, k % res) {
                let q = a * res + b;
                if flagged[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        let mut w = grid[best].w.to_vec();
        let mut fw = grid[best].f;
        for _ in 0..10 {
            let p = population_point(marginal, labels, spec, &w, oracle, None)?;
            fw = p.loss;
            let g = norm2(&p.grad);
            if g == 0.0 {
                break;
            }
            let h = (0.5 * cell / g).min(1.0);
            for (a, b) in w.iter_mut().zip(&p.grad) {
                *a -= h * b;
            }
        }
        out.push(StationaryCell { cell: (best / res, best % res), grid_w: grid[best].w, refined_w: w, f: fw });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianProbe {
    pub h: Vec<Vec<f64>>,
    pub asymmetry: f64,
    pub eigenvalues: Vec<f64>,
}

impl HessianProbe {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Central-difference Hessian of `f` at `w` with step `step`, symmetrized.
pub fn hessian_probe<F>(f: F, w: &[f64], step: f64) -> Result<HessianProbe>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let d = w.len();
    if d == 0 || d > 8 {
        return Err(Error::InvalidParameter(format!("hessian probe needs 1 ≤ d ≤ 8, got {d}")));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step = {step} must be > 0")));
    }
    let at = |di: &[(usize, f64)]| -> Result<f64> {
        let mut x = w.to_vec();
        for &(i, s) in di {
            x[i] += s * step;
        }
        f(&x)
    };
    let f0 = f(w)?;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                Ok((at(&[(i, 1.0)])? - 2.0 * f0 + at(&[(i, -1.0)])?) / (step * step))
            } else {
                let pp = at(&[(i, 1.0), (j, 1.0)])?;
                let pm = at(&[(i, 1.0), (j, -1.0)])?;
                let mp = at(&[(i, -1.0), (j, 1.0)])?;
                let mm = at(&[(i, -1.0), (j, -1.0)])?;
                Ok((pp - pm - mp + mm) / (4.0 * step * step))
            }
        })
        .collect::<Result<_>>()?;
    let raw = DMatrix::from_row_slice(d, d, &vals);
    let asymmetry = (&raw - raw.transpose()).abs().max();
    let sym = (&raw + raw.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym.clone()).eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (0..d).map(|i| (0..d).map(|j| sym[(i, j)]).collect()).collect();
    Ok(HessianProbe { h, asymmetry, eigenvalues })
}

//! Fixed-step gradient descent for the two activation classes, their
//! hyperparameter schedules, the ρ-grid search, and the step-size calculator
//! for bounded gradient fields.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{Activation, SigmoidalActivation};
use crate::distributions::MarginalSpec;
use crate::error::{Error, Result};
use crate::instances::{InstanceSource, LabelModel, LabeledDataset};
use crate::loss::{loss_and_gradient, loss_only, population_loss_grad_quadrature, LossSpec};
use crate::norms::{dual_weighted_norm, WeightVector, MIN_NORM};
use crate::numeric::{norm2, Matrix};
use crate::quadrature::QuadRule;

/// Universal constants the schedules need values for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConstants {
    /// Step-size scale `c` for the sigmoidal schedule.
    pub c: f64,
    /// Exponents `(a, b)` in `T = ⌈κ^{-a} ε^{-b}⌉`.
    pub t_exp_kappa: f64,
    pub t_exp_eps: f64,
    /// Step-size scale for the unbounded schedule.
    pub c_unbounded: f64,
    /// Leading constant of the per-step sample size.
    pub c_samples: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        Self { c: 0.1, t_exp_kappa: 5.0, t_exp_eps: 4.0, c_unbounded: 0.5, c_samples: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidalSchedule {
    pub kappa: f64,
    pub eta: f64,
    pub rho: f64,
    pub trunc_m: f64,
    /// Iteration count as a real; it may exceed any usable budget.
    pub t: f64,
}

fn unit_range(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1]")))
    }
}

pub fn kappa(l: f64, r: f64, tau: f64, mu: f64, xi: f64) -> f64 {
    l.powi(6) * r.powi(6) * mu.powi(3) * tau.powi(4) / (xi * xi)
}

pub fn schedule_sigmoidal(
    l: f64,
    r: f64,
    tau: f64,
    mu: f64,
    xi: f64,
    eps: f64,
    k: &ScheduleConstants,
) -> Result<SigmoidalSchedule> {
    for (n, v) in [("L", l), ("R", r), ("tau", tau), ("mu", mu)] {
        unit_range(n, v)?;
    }
    if !(xi >= 1.0 && xi.is_finite()) {
        return Err(Error::InvalidParameter(format!("xi = {xi} must be ≥ 1")));
    }
    if !(k.c > 0.0 && k.c < 1.0) {
        return Err(Error::InvalidParameter(format!("c = {} must lie in (0, 1)", k.c)));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be > 0")));
    }
    let kappa = kappa(l, r, tau, mu, xi);
    Ok(SigmoidalSchedule {
        kappa,
        eta: k.c * eps.powf(2.5),
        rho: eps.powi(3) / (k.c * kappa.powi(5)),
        trunc_m: xi / mu,
        t: (kappa.powf(-k.t_exp_kappa) * eps.powf(-k.t_exp_eps)).ceil(),
    })
}

/// Schedule from an activation's shipped constants.
pub fn schedule_for(act: &SigmoidalActivation, l: f64, r: f64, eps: f64, k: &ScheduleConstants) -> Result<SigmoidalSchedule> {
    schedule_sigmoidal(l, r, act.tau, act.mu, act.xi, eps, k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnboundedSchedule {
    pub eta: f64,
    pub trunc_m: f64,
    pub t: usize,
    pub n_per_step: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Lipschitz bound `B` of the gradient field.
    pub b: f64,
}

pub fn schedule_unbounded(
    l: f64,
    r: f64,
    alpha: f64,
    lambda: f64,
    w: f64,
    eps: f64,
    d: usize,
    k: &ScheduleConstants,
) -> Result<UnboundedSchedule> {
    unit_range("L", l)?;
    unit_range("R", r)?;
    if !(alpha > 0.0 && lambda >= alpha) {
        return Err(Error::InvalidParameter(format!("need 0 < alpha ≤ lambda, got {alpha}, {lambda}")));
    }
    if !(w >= 1.0) {
        return Err(Error::InvalidParameter(format!("W = {w} must be ≥ 1")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1)")));
    }
    let c = k.c_unbounded;
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter(format!("c = {c} must lie in (0, 1)")));
    }
    let r4 = r.powi(4);
    let eta = c * alpha * alpha * l * r4 / lambda;
    let alpha2 = 0.5 * alpha * alpha * l * r4;
    let b = lambda;
    let alpha1 = eps.sqrt() * lambda / (c * l * r4 * alpha * alpha);
    let t = ((w * w + (1.0 / alpha1).ln().max(0.0)) / (eta * alpha2)).ceil();
    let log_e = (1.0 / eps).ln();
    let n = k.c_samples * d as f64 * lambda.powi(4) * w * w * (log_e * log_e).max(1.0) / (l * alpha2).powi(2);
    Ok(UnboundedSchedule {
        eta,
        trunc_m: 3.0 * w * (w / eps).ln().max(1.0),
        t: t as usize,
        n_per_step: n.ceil() as usize,
        alpha1,
        alpha2,
        b,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "n", rename_all = "snake_case")]
pub enum Batch {
    FixedSample(usize),
    FreshPerStep(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdConfig {
    pub eta: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub rho: f64,
    #[serde(rename = "trunc_M")]
    pub trunc_m: f64,
    pub batch: Batch,
    pub seed: u64,
    pub eps_target: f64,
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta = {} must be > 0", self.eta)));
        }
        if self.t == 0 {
            return Err(Error::InvalidParameter("T must be ≥ 1".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho = {} must be finite and ≥ 0", self.rho)));
        }
        if !(self.trunc_m > 0.0) {
            return Err(Error::InvalidParameter(format!("trunc_M = {} must be > 0", self.trunc_m)));
        }
        if !(self.eps_target > 0.0) {
            return Err(Error::InvalidParameter(format!("eps_target = {} must be > 0", self.eps_target)));
        }
        Ok(())
    }
}

/// Step size capped at `1/(ρ + β)`, where `β` bounds the smoothness of the
/// unregularized objective.
pub fn stable_eta(eta: f64, rho: f64, beta: f64) -> f64 {
    eta.min(1.0 / (rho + beta))
}

/// Working smoothness constant `3ξ²d` for the truncated sigmoidal loss
/// under an isotropic marginal in dimension `d`.
pub fn sigmoidal_smoothness(act: &crate::activations::SigmoidalActivation, d: usize) -> f64 {
    3.0 * act.xi * act.xi * d as f64
}

/// Norm above which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Keep every iterate up to this many steps; thin beyond it.
pub const FULL_TRACE_LIMIT: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub iteration: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Iteration index of each stored iterate.
    pub kept: Vec<usize>,
    pub iterates: Vec<Vec<f64>>,
    /// Per-iteration objective, gradient ℓ2 norm, dual weighted gradient norm
    /// (absent while `‖w‖ < 1e-12`) and `‖w‖₂`, for `t = 0..=T`.
    pub losses: Vec<f64>,
    pub grad_l2: Vec<f64>,
    pub grad_dual: Vec<Option<f64>>,
    pub w_norm: Vec<f64>,
    pub final_w: Vec<f64>,
    pub config: GdConfig,
    pub samples_drawn: u64,
    pub diverged: Option<Divergence>,
    pub wall_time: f64,
}

fn keep(t: usize, total: usize) -> bool {
    if total <= FULL_TRACE_LIMIT || t + 100 >= total || t < 10 {
        return true;
    }
    let lt = (t as f64).ln() / 1.1f64.ln();
    let lo = (lt.floor() as i32).max(0);
    let p = 1.1f64.powi(lo).round() as usize;
    let q = 1.1f64.powi(lo + 1).round() as usize;
    t == p || t == q
}

struct Recorder {
    r: RunReport,
    total: usize,
    started: Instant,
}

impl Recorder {
    fn new(config: &GdConfig) -> Self {
        Self {
            r: RunReport {
                kept: Vec::new(),
                iterates: Vec::new(),
                losses: Vec::new(),
                grad_l2: Vec::new(),
                grad_dual: Vec::new(),
                w_norm: Vec::new(),
                final_w: Vec::new(),
                config: config.clone(),
                samples_drawn: 0,
                diverged: None,
                wall_time: 0.0,
            },
            total: config.t,
            started: Instant::now(),
        }
    }

    fn push(&mut self, t: usize, w: &[f64], loss: f64, g: &[f64]) {
        let nw = norm2(w);
        self.r.losses.push(loss);
        self.r.grad_l2.push(norm2(g));
        self.r.grad_dual.push(if nw >= MIN_NORM {
            WeightVector::new(w.to_vec()).ok().and_then(|wv| dual_weighted_norm(g, &wv).ok())
        } else {
            None
        });
        self.r.w_norm.push(nw);
        if keep(t, self.total) {
            self.r.kept.push(t);
            self.r.iterates.push(w.to_vec());
        }
    }

    fn finish(mut self, w: Vec<f64>) -> RunReport {
        if self.r.kept.last() != Some(&(self.r.losses.len() - 1)) {
            self.r.kept.push(self.r.losses.len() - 1);
            self.r.iterates.push(w.clone());
        }
        self.r.final_w = w;
        self.r.wall_time = self.started.elapsed().as_secs_f64();
        self.r
    }

    fn diverge(mut self, t: usize, w: Vec<f64>, reason: String) -> RunReport {
        self.r.diverged = Some(Divergence { iteration: t, reason });
        if !self.r.losses.is_empty() {
            return self.finish(w);
        }
        self.r.final_w = w;
        self.r.wall_time = self.started.elapsed().as_secs_f64();
        self.r
    }
}

fn guard(w: &[f64], loss: f64) -> Option<String> {
    let nw = norm2(w);
    if !nw.is_finite() || nw > DIVERGENCE_NORM {
        Some(format!("‖w‖ = {nw:e} exceeds {DIVERGENCE_NORM:e}"))
    } else if !loss.is_finite() {
        Some(format!("loss = {loss}"))
    } else {
        None
    }
}

fn step(w: &mut [f64], g: &[f64], eta: f64) {
    for (a, b) in w.iter_mut().zip(g) {
        *a -= eta * b;
    }
}

/// Full-batch GD on the truncated, regularized empirical loss of one fixed
/// sample. Starts at `init` (zero when absent).
pub fn gd_sigmoidal(ds: &LabeledDataset, act: &Activation, config: &GdConfig, init: Option<&[f64]>) -> Result<RunReport> {
    config.validate()?;
    if act.as_sigmoidal().is_none() {
        return Err(Error::InvalidParameter(format!("{} is not a sigmoidal activation", act.name())));
    }
    if let Batch::FreshPerStep(_) = config.batch {
        return Err(Error::InvalidParameter("fresh_per_step needs a generative source, not a fixed dataset".into()));
    }
    let d = ds.dim();
    let mut w = match init {
        Some(v) if v.len() != d => return Err(Error::DimMismatch { expected: d, got: v.len() }),
        Some(v) => v.to_vec(),
        None => vec![0.0; d],
    };
    let spec = LossSpec { act: act.clone(), rho: config.rho, trunc_m: Some(config.trunc_m) };
    let mut rec = Recorder::new(config);
    rec.r.samples_drawn = ds.n() as u64;
    for t in 0..=config.t {
        let (loss, g) = match loss_and_gradient(&ds.x, &ds.y, &spec, &w) {
            Ok(p) => p,
            Err(e) => return Ok(rec.diverge(t, w, e.to_string())),
        };
        if let Some(reason) = guard(&w, loss) {
            return Ok(rec.diverge(t, w, reason));
        }
        rec.push(t, &w, loss, &g);
        if t < config.t {
            step(&mut w, &g, config.eta);
        }
    }
    Ok(rec.finish(w))
}

/// GD with a fresh sample of `n_per_step` rows at every step, labels
/// truncated at `M`, and no regularizer.
pub fn gd_unbounded(source: &InstanceSource, act: &Activation, config: &GdConfig) -> Result<RunReport> {
    config.validate()?;
    if act.as_unbounded().is_none() {
        return Err(Error::InvalidParameter(format!("{} is not an unbounded activation", act.name())));
    }
    let n = match config.batch {
        Batch::FreshPerStep(n) if n > 0 => n,
        _ => return Err(Error::InvalidParameter("gd_unbounded needs batch fresh_per_step(n ≥ 1)".into())),
    };
    let d = source.marginal.dim;
    let spec = LossSpec { act: act.clone(), rho: 0.0, trunc_m: Some(config.trunc_m) };
    let src = InstanceSource { seed: config.seed, ..source.clone() };
    let mut w = vec![0.0; d];
    let mut rec = Recorder::new(config);
    let mut batch: (Matrix, Vec<f64>) = (Matrix::zeros(0, d), Vec::new());
    for t in 0..=config.t {
        // The final iterate is scored on the last batch, so exactly T·n rows are drawn.
        if t < config.t {
            batch = src.draw((t * n) as u64, n);
            rec.r.samples_drawn += n as u64;
        }
        let (x, y) = (&batch.0, &batch.1);
        let (loss, g) = match loss_and_gradient(x, y, &spec, &w) {
            Ok(p) => p,
            Err(e) => return Ok(rec.diverge(t, w, e.to_string())),
        };
        if let Some(reason) = guard(&w, loss) {
            return Ok(rec.diverge(t, w, reason));
        }
        rec.push(t, &w, loss, &g);
        if t < config.t {
            step(&mut w, &g, config.eta);
        }
    }
    Ok(rec.finish(w))
}

/// GD driven by exact population gradients from the quadrature oracle
/// (dimension ≤ 2). `batch` is ignored.
pub fn gd_population(
    marginal: &MarginalSpec,
    labels: &LabelModel,
    act: &Activation,
    config: &GdConfig,
    rule: &QuadRule,
) -> Result<RunReport> {
    config.validate()?;
    let spec = LossSpec { act: act.clone(), rho: config.rho, trunc_m: Some(config.trunc_m) };
    let mut w = vec![0.0; marginal.dim];
    let mut rec = Recorder::new(config);
    for t in 0..=config.t {
        let (loss, g) = population_loss_grad_quadrature(marginal, labels, &spec, &w, rule)?;
        if let Some(reason) = guard(&w, loss) {
            return Ok(rec.diverge(t, w, reason));
        }
        rec.push(t, &w, loss, &g);
        if t < config.t {
            step(&mut w, &g, config.eta);
        }
    }
    Ok(rec.finish(w))
}

/// Candidate opt-levels `ε, rε, r²ε, …` up to and including the first value
/// ≥ `top`, and the regularizer `ρ(ν) = rho_scale · ν³` for each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoGrid {
    pub eps: f64,
    pub ratio: f64,
    pub top: f64,
    pub rho_scale: f64,
}

impl RhoGrid {
    pub fn levels(&self) -> Result<Vec<f64>> {
        if !(self.eps > 0.0 && self.ratio > 1.0 && self.top >= self.eps) {
            return Err(Error::InvalidParameter(format!(
                "grid needs eps > 0, ratio > 1, top ≥ eps (got {}, {}, {})",
                self.eps, self.ratio, self.top
            )));
        }
        let mut out = vec![self.eps];
        while *out.last().unwrap() < self.top {
            out.push(out.last().unwrap() * self.ratio);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridOutcome {
    pub levels: Vec<f64>,
    pub rhos: Vec<f64>,
    /// Plain (ρ = 0, untruncated) loss of each candidate on the validation sample.
    pub val_losses: Vec<f64>,
    pub best: usize,
    pub best_w: Vec<f64>,
    pub reports: Vec<std::result::Result<RunReport, String>>,
}

/// Runs [`gd_sigmoidal`] once per candidate level and keeps the candidate
/// with the smallest validation loss. Failed runs are recorded, not fatal.
pub fn rho_grid_search(
    train: &LabeledDataset,
    val: &LabeledDataset,
    act: &Activation,
    base: &GdConfig,
    grid: &RhoGrid,
) -> Result<GridOutcome> {
    let levels = grid.levels()?;
    let rhos: Vec<f64> = levels.iter().map(|v| grid.rho_scale * v.powi(3)).collect();
    let reports: Vec<std::result::Result<RunReport, String>> = rhos
        .par_iter()
        .map(|&rho| {
            let cfg = GdConfig { rho, ..base.clone() };
            gd_sigmoidal(train, act, &cfg, None).map_err(|e| e.to_string())
        })
        .collect();
    let plain = LossSpec::plain(act.clone());
    let val_losses: Vec<f64> = reports
        .iter()
        .map(|r| match r {
            Ok(rep) if rep.diverged.is_none() => loss_only(&val.x, &val.y, &plain, &rep.final_w).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        })
        .collect();
    let mut best = 0;
    for (i, v) in val_losses.iter().enumerate() {
        if *v < val_losses[best] {
            best = i;
        }
    }
    if !val_losses[best].is_finite() {
        return Err(Error::Diverged { iteration: 0, reason: "every grid candidate failed".into() });
    }
    let best_w = reports[best].as_ref().map(|r| r.final_w.clone()).unwrap_or_default();
    Ok(GridOutcome { levels, rhos, val_losses, best, best_w, reports })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRates {
    pub b: f64,
    pub z0: f64,
    pub z1: f64,
    pub zeta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
}

/// `η = (1/B²) min(α₁α₂, β₁β₂/Z₁^{3/2}, 2γ/Z₁, (1−ζ)Z₁B)` and
/// `T_min = ⌈v_sq / (η · min(α₁α₂, β₁β₂/Z₁^{3/2}))⌉` for a bound `v_sq` on `‖v‖²`.
pub fn stepsize_bounded_field(p: &FieldRates, v_sq: f64) -> Result<(f64, u64)> {
    if !(p.z1 > p.z0 && p.z0 >= 1.0) {
        return Err(Error::InvalidParameter(format!("need Z1 > Z0 ≥ 1, got Z0={}, Z1={}", p.z0, p.z1)));
    }
    if !(p.zeta > 0.0 && p.zeta < 1.0) {
        return Err(Error::InvalidParameter(format!("zeta = {} must lie in (0, 1)", p.zeta)));
    }
    for (n, v) in [("B", p.b), ("alpha1", p.alpha1), ("alpha2", p.alpha2), ("beta1", p.beta1), ("beta2", p.beta2), ("gamma", p.gamma)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("{n} = {v} must be > 0")));
        }
    }
    let a = p.alpha1 * p.alpha2;
    let beta = p.beta1 * p.beta2 / p.z1.powf(1.5);
    let eta = a.min(beta).min(2.0 * p.gamma / p.z1).min((1.0 - p.zeta) * p.z1 * p.b) / (p.b * p.b);
    let t = (v_sq / (eta * a.min(beta))).ceil();
    Ok((eta, t as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoidal_schedule_examples() {
        let k = ScheduleConstants::default();
        let s = schedule_sigmoidal(1.0, 1.0, 1.0, 1.0, 1.0, 0.1, &k).unwrap();
        assert_eq!(s.kappa, 1.0);
        assert!((s.eta - 3.1622776601683795e-4).abs() < 1e-15);
        assert!((s.rho - 0.01).abs() < 1e-15);
        assert_eq!(s.trunc_m, 1.0);
        assert!((kappa(0.5, 1.0, 1.0, 1.0, 1.0) - 0.015625).abs() < 1e-18);
        assert!(schedule_sigmoidal(1.5, 1.0, 1.0, 1.0, 1.0, 0.1, &k).is_err());
        assert!(schedule_sigmoidal(1.0, 1.0, 1.0, 1.0, 0.5, 0.1, &k).is_err());
    }

    #[test]
    fn unbounded_schedule_examples() {
        let k = ScheduleConstants::default();
        let s = schedule_unbounded(1.0, 1.0, 1.0, 1.0, 1.0, 0.1, 2, &k).unwrap();
        assert!((s.eta - 0.5).abs() < 1e-15);
        assert!((s.trunc_m - 3.0 * 10f64.ln()).abs() < 1e-12);
        let a = schedule_unbounded(0.05, 1.0, 1.0, 1.0, 1.0, 1e-4, 4, &k).unwrap();
        let b = schedule_unbounded(0.05, 1.0, 1.0, 1.0, 1.0, 0.5e-4, 4, &k).unwrap();
        let extra = (b.t - a.t) as f64;
        assert!((extra - 0.5 * 2f64.ln() / (a.eta * a.alpha2)).abs() <= 1.0);
    }

    #[test]
    fn stepsize_examples() {
        let p = FieldRates { b: 1.0, z0: 1.0, z1: 4.0, zeta: 0.5, alpha1: 0.1, alpha2: 0.1, beta1: 0.2, beta2: 0.4, gamma: 0.02 };
        let (eta, _) = stepsize_bounded_field(&p, 1.0).unwrap();
        assert!((eta - 0.01).abs() < 1e-15);
        let q = FieldRates { b: 2.0, ..p };
        assert!((stepsize_bounded_field(&q, 1.0).unwrap().0 - 0.0025).abs() < 1e-15);
        assert!(stepsize_bounded_field(&FieldRates { z1: 0.5, ..p }, 1.0).is_err());
    }

    #[test]
    fn thinning_keeps_ends() {
        let total = 50_000;
        let kept: Vec<usize> = (0..=total).filter(|&t| keep(t, total)).collect();
        assert!(kept.len() < 300);
        assert_eq!(kept[0], 0);
        assert_eq!(*kept.last().unwrap(), total);
        assert!((0..=100).all(|t| keep(t, 100)));
    }
}

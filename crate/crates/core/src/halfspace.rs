//! Halfspace learning through the ramp surrogate: run the ρ-grid search on
//! ramp GD, then classify by `sign(ŵ·x)` with ties sent to +1.

use serde::{Deserialize, Serialize};

use crate::activations::{builtin_sigmoidal, Activation};
use crate::error::{Error, Result};
use crate::instances::LabeledDataset;
use crate::numeric::{dot, reduce_rows, Matrix};
use crate::optimizer::{rho_grid_search, Batch, GdConfig, RhoGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HalfspaceConfig {
    pub eta: f64,
    #[serde(rename = "T")]
    pub t: usize,
    /// `ρ(ν) = rho_scale · ν³` for each candidate opt-level `ν`.
    pub rho_scale: f64,
    pub grid_ratio: f64,
    /// Fraction of the training rows held back for candidate selection.
    pub val_fraction: f64,
}

impl Default for HalfspaceConfig {
    fn default() -> Self {
        Self { eta: 1.0, t: 500, rho_scale: 1e-3, grid_ratio: 2.0, val_fraction: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceResult {
    pub w_hat: Vec<f64>,
    /// `(1/2) mean (r(ŵ·x) − y)²` on the held-out rows.
    pub ramp_loss: f64,
    pub misclassification: f64,
    /// `2 · ramp_loss`, an upper bound on `misclassification`.
    pub zero_one_bound: f64,
    /// Set when every training label is the same; the classifier then
    /// predicts that label everywhere.
    pub constant_label: Option<f64>,
    pub levels: Vec<f64>,
    pub val_losses: Vec<f64>,
}

impl HalfspaceResult {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.constant_label {
            Some(c) => c,
            None => predict_sign(&self.w_hat, x),
        }
    }
}

pub fn predict_sign(w: &[f64], x: &[f64]) -> f64 {
    if dot(w, x) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_labels(ds: &LabeledDataset) -> Result<()> {
    if let Some(i) = ds.y.iter().position(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter(format!("label {} at row {i} is not ±1", ds.y[i])));
    }
    Ok(())
}

fn split(ds: &LabeledDataset, from: usize, to: usize) -> LabeledDataset {
    let d = ds.dim();
    let x = Matrix::from_vec(to - from, d, ds.x.data()[from * d..to * d].to_vec());
    LabeledDataset { x, y: ds.y[from..to].to_vec(), meta: ds.meta.clone() }
}

/// Held-out misclassification and halved ramp loss of a classifier.
pub fn evaluate(res: &HalfspaceResult, holdout: &LabeledDataset) -> (f64, f64) {
    let ramp = Activation::from(builtin_sigmoidal("ramp").expect("ramp is built in"));
    let acc = reduce_rows(holdout.n(), 2, |i, acc| {
        let x = holdout.x.row(i);
        let y = holdout.y[i];
        if res.predict(x) != y {
            acc[0] += 1.0;
        }
        let p = match res.constant_label {
            Some(c) => c,
            None => ramp.eval(dot(&res.w_hat, x)),
        };
        acc[1] += (p - y) * (p - y);
    });
    let n = holdout.n() as f64;
    (acc[0] / n, 0.5 * acc[1] / n)
}

/// Learns `sign(ŵ·x)` from ±1 labels; `eps` is the bottom of the opt-level grid.
pub fn learn_halfspace(
    train: &LabeledDataset,
    holdout: &LabeledDataset,
    eps: f64,
    seed: u64,
    cfg: &HalfspaceConfig,
) -> Result<HalfspaceResult> {
    check_labels(train)?;
    check_labels(holdout)?;
    if train.n() < 10 {
        return Err(Error::InvalidParameter("need at least 10 training rows".into()));
    }
    let ramp = builtin_sigmoidal("ramp")?;
    let top = ramp.xi / ramp.mu;
    let mut res = if train.y.iter().all(|&y| y == train.y[0]) {
        HalfspaceResult {
            w_hat: vec![0.0; train.dim()],
            ramp_loss: 0.0,
            misclassification: 0.0,
            zero_one_bound: 0.0,
            constant_label: Some(train.y[0]),
            levels: Vec::new(),
            val_losses: Vec::new(),
        }
    } else {
        let n_val = ((train.n() as f64 * cfg.val_fraction).round() as usize).clamp(1, train.n() - 1);
        let fit = split(train, 0, train.n() - n_val);
        let val = split(train, train.n() - n_val, train.n());
        let base = GdConfig {
            eta: cfg.eta,
            t: cfg.t,
            rho: 0.0,
            trunc_m: top,
            batch: Batch::FixedSample(fit.n()),
            seed,
            eps_target: eps,
        };
        let grid = RhoGrid { eps, ratio: cfg.grid_ratio, top, rho_scale: cfg.rho_scale };
        let out = rho_grid_search(&fit, &val, &Activation::from(ramp), &base, &grid)?;
        HalfspaceResult {
            w_hat: out.best_w,
            ramp_loss: 0.0,
            misclassification: 0.0,
            zero_one_bound: 0.0,
            constant_label: None,
            levels: out.levels,
            val_losses: out.val_losses,
        }
    };
    let (mis, ramp_loss) = evaluate(&res, holdout);
    res.misclassification = mis;
    res.ramp_loss = ramp_loss;
    res.zero_one_bound = 2.0 * ramp_loss;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_positive() {
        assert_eq!(predict_sign(&[1.0, -1.0], &[2.0, 2.0]), 1.0);
        assert_eq!(predict_sign(&[1.0, -1.0], &[1.0, 2.0]), -1.0);
    }
}

//! The w-weighted Euclidean norm and its dual.
//!
//! `‖u‖_w = ‖proj_w u‖ / ‖w‖^{3/2} + ‖proj_{w⊥} u‖ / ‖w‖^{1/2}`; the dual takes
//! the max of the two components scaled by the reciprocal powers.

use crate::error::{Error, Result};
use crate::numeric::{angle, dot, norm2};

/// Smallest `‖w‖` accepted by the weighted norm.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    coords: Vec<f64>,
    norm: f64,
}

impl WeightVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("weight vector has dimension 0".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("weight vector".into()));
        }
        let norm = norm2(&coords);
        if norm < MIN_NORM {
            return Err(Error::ZeroWeight(norm));
        }
        Ok(Self { coords, norm })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: u.len() });
        }
        Ok(())
    }
}

/// Split `u` into its components along `w` and orthogonal to `w`.
pub fn proj_split(u: &[f64], w: &WeightVector) -> Result<(Vec<f64>, Vec<f64>)> {
    w.check(u)?;
    let c = dot(u, &w.coords) / (w.norm * w.norm);
    let par: Vec<f64> = w.coords.iter().map(|x| c * x).collect();
    let perp = u.iter().zip(&par).map(|(a, b)| a - b).collect();
    Ok((par, perp))
}

/// Lengths of the parallel and orthogonal components.
pub fn component_norms(u: &[f64], w: &WeightVector) -> Result<(f64, f64)> {
    let (par, perp) = proj_split(u, w)?;
    Ok((norm2(&par), norm2(&perp)))
}

pub fn weighted_norm(u: &[f64], w: &WeightVector) -> Result<f64> {
    let (a, b) = component_norms(u, w)?;
    Ok(a / w.norm.powf(1.5) + b / w.norm.sqrt())
}

pub fn dual_weighted_norm(v: &[f64], w: &WeightVector) -> Result<f64> {
    let (a, b) = component_norms(v, w)?;
    Ok((a * w.norm.powf(1.5)).max(b * w.norm.sqrt()))
}

/// `(lo, hi)` with `lo ‖x‖ ≤ ‖x‖_w ≤ hi ‖x‖` for every `x`.
pub fn norm_sandwich_bounds(w: &WeightVector) -> (f64, f64) {
    let a = w.norm.powf(-1.5);
    let b = w.norm.powf(-0.5);
    (a.min(b), std::f64::consts::SQRT_2 * a.max(b))
}

/// Upper bound on `sup_x ‖x‖_u / ‖x‖_v` for `‖u‖, ‖v‖ ≤ q`.
pub fn base_change_ratio_bound(u: &WeightVector, v: &WeightVector, q: f64) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch { expected: v.dim(), got: u.dim() });
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("Q = {q} must be at least 1")));
    }
    if u.norm > q * (1.0 + 1e-12) || v.norm > q * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "norms {} and {} exceed Q = {q}",
            u.norm, v.norm
        )));
    }
    let theta = if u == v { 0.0 } else { angle(&u.coords, &v.coords) };
    let (nu, nv) = (u.norm, v.norm);
    let delta = (nv.powf(-1.5) - nu.powf(-1.5)).abs() + (nv.powf(-0.5) - nu.powf(-0.5)).abs();
    let expo = q.powf(1.5) * (4.0 * theta * (nv.powf(-1.5) + nv.powf(-0.5)) + delta);
    Ok(expo.exp())
}

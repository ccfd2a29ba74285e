//! Deterministic expectations over 1D and 2D marginals.
//!
//! Integrands here are piecewise smooth with jumps along known lines
//! `a·x = c` (activation kinks, label breakpoints). Each 1D pass splits its
//! interval at every line crossing and runs composite Gauss–Legendre on the
//! smooth pieces, so accuracy does not degrade at the jumps. In 2D the outer
//! axis is also split wherever two lines cross or a line leaves the box.

use crate::distributions::{Family, MarginalSpec};
use crate::error::{Error, Result};

/// Gaussian integrals are truncated at `|x_i| ≤ 10`; the discarded mass is below 1e-22.
pub const GAUSS_TAIL: f64 = 10.0;

/// A line (hyperplane) `a·x = c` along which the integrand may jump.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub a: Vec<f64>,
    pub c: f64,
}

#[derive(Clone, Debug)]
pub struct QuadRule {
    pub panel: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    /// Composite rule with panels no wider than `panel` and `order` nodes each.
    pub fn new(panel: f64, order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { panel, nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Same order, half the panel width.
    pub fn refined(&self) -> Self {
        Self { panel: self.panel / 2.0, nodes: self.nodes.clone(), weights: self.weights.clone() }
    }

    /// Quadrature nodes and weights over `[lo, hi]` split at `breaks`.
    fn points(&self, lo: f64, hi: f64, breaks: &mut Vec<f64>, out: &mut Vec<(f64, f64)>) {
        out.clear();
        breaks.retain(|b| *b > lo && *b < hi && b.is_finite());
        breaks.push(lo);
        breaks.push(hi);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = b - a;
            if len <= 0.0 {
                continue;
            }
            let m = ((len / self.panel).ceil() as usize).max(1);
            let h = len / m as f64;
            for p in 0..m {
                let mid = a + (p as f64 + 0.5) * h;
                for (t, w) in self.nodes.iter().zip(&self.weights) {
                    out.push((mid + 0.5 * h * t, 0.5 * h * w));
                }
            }
        }
    }
}

impl Default for QuadRule {
    fn default() -> Self {
        Self::new(0.25, 10)
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn domain(spec: &MarginalSpec) -> Result<(f64, Box<dyn Fn(f64) -> f64 + Sync>)> {
    match spec.family {
        Family::StandardGaussian => {
            let f = spec.family;
            Ok((GAUSS_TAIL, Box::new(move |x| f.density_1d(x))))
        }
        Family::IsotropicCube | Family::UniformSquare { .. } => {
            let h = spec.family.support().unwrap();
            Ok((h, Box::new(move |_| 0.5 / h)))
        }
        Family::IsotropicLaplace => Err(Error::Unsupported("quadrature for the laplace family".into())),
    }
}

/// `E[f(x)]` for a `width`-valued integrand over a marginal of dimension 1 or 2.
///
/// `f(x, acc, weight)` must add `weight * f(x)` into `acc`.
pub fn expect<F>(spec: &MarginalSpec, lines: &[Line], rule: &QuadRule, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64], f64),
{
    let (t, dens) = domain(spec)?;
    let mut acc = vec![0.0; width];
    let mut breaks = Vec::new();
    let mut pts = Vec::new();
    match spec.dim {
        1 => {
            for l in lines {
                if l.a[0] != 0.0 {
                    breaks.push(l.c / l.a[0]);
                }
            }
            rule.points(-t, t, &mut breaks, &mut pts);
            for &(x, w) in &pts {
                f(&[x], &mut acc, w * dens(x));
            }
        }
        2 => {
            let eps = 1e-300;
            let mut outer = Vec::new();
            for (i, l) in lines.iter().enumerate() {
                if l.a[0].abs() <= eps {
                    if l.a[1].abs() > eps {
                        outer.push(l.c / l.a[1]);
                    }
                    continue;
                }
                if l.a[1].abs() > eps {
                    outer.push((l.c - l.a[0] * t) / l.a[1]);
                    outer.push((l.c + l.a[0] * t) / l.a[1]);
                }
                for m in &lines[i + 1..] {
                    let det = l.a[0] * m.a[1] - l.a[1] * m.a[0];
                    if det.abs() > 1e-12 {
                        outer.push((l.a[0] * m.c - m.a[0] * l.c) / det);
                    }
                }
            }
            let mut outer_pts = Vec::new();
            rule.points(-t, t, &mut outer, &mut outer_pts);
            let mut x = [0.0; 2];
            for &(x2, w2) in &outer_pts {
                breaks.clear();
                for l in lines {
                    if l.a[0].abs() > eps {
                        breaks.push((l.c - l.a[1] * x2) / l.a[0]);
                    }
                }
                rule.points(-t, t, &mut breaks, &mut pts);
                let d2 = dens(x2) * w2;
                x[1] = x2;
                for &(x1, w1) in &pts {
                    x[0] = x1;
                    f(&x, &mut acc, w1 * dens(x1) * d2);
                }
            }
        }
        d => return Err(Error::Unsupported(format!("quadrature in dimension {d}"))),
    }
    Ok(acc)
}

/// Refine the panel width until two successive estimates agree to `tol`
/// in every component (at most six halvings).
pub fn expect_adaptive<F>(
    spec: &MarginalSpec,
    lines: &[Line],
    start: &QuadRule,
    tol: f64,
    width: usize,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64], f64),
{
    let mut rule = start.clone();
    let mut prev = expect(spec, lines, &rule, width, &f)?;
    for _ in 0..6 {
        rule = rule.refined();
        let next = expect(spec, lines, &rule, width, &f)?;
        let diff = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prev = next;
        if diff <= tol {
            break;
        }
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((m18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_moments() {
        let g = MarginalSpec::gaussian(2);
        let r = expect(&g, &[], &QuadRule::default(), 3, |x, acc, w| {
            acc[0] += w;
            acc[1] += w * x[0] * x[0];
            acc[2] += w * x[0] * x[1];
        })
        .unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
        assert!(r[2].abs() < 1e-13);
    }

    #[test]
    fn tilted_indicator_is_exact() {
        // P(x1 + 2 x2 <= 0.5) for a standard gaussian equals Φ(0.5/√5).
        let g = MarginalSpec::gaussian(2);
        let line = Line { a: vec![1.0, 2.0], c: 0.5 };
        let r = expect(&g, &[line], &QuadRule::default(), 1, |x, acc, w| {
            if x[0] + 2.0 * x[1] <= 0.5 {
                acc[0] += w;
            }
        })
        .unwrap();
        let want = 0.5 * (1.0 + crate::activations::erf(0.5 / 5f64.sqrt() / 2f64.sqrt()));
        assert!((r[0] - want).abs() < 1e-12, "{} vs {}", r[0], want);
    }
}

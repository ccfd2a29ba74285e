//! Isotropic marginals, their samplers and 2D projected densities, and a
//! grid certifier for the (L, R)-well-behaved conditions.
//!
//! Shipped constants (checked by `certify_well_behaved` in the tests):
//! gaussian (0.05, 1), cube (1/12, 1), laplace (0.025, 1), and the
//! non-isotropic `uniform_square` box used for loss-surface pictures (1/16, 1).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{CertCheck, CertReport};
use crate::error::{Error, Result};
use crate::numeric::{dot, Matrix};
use crate::rng::{Domain, RowKey};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    StandardGaussian,
    /// Uniform on `[-√3, √3]^d`.
    IsotropicCube,
    /// Product of Laplace(0, 1/√2).
    IsotropicLaplace,
    /// Uniform on `[-h, h]^d`; not isotropic unless `h = √3`.
    UniformSquare { half_width: f64 },
}

impl Family {
    pub fn default_lr(&self) -> (f64, f64) {
        match self {
            Family::StandardGaussian => (0.05, 1.0),
            Family::IsotropicCube => (1.0 / 12.0, 1.0),
            Family::IsotropicLaplace => (0.025, 1.0),
            Family::UniformSquare { half_width } => (1.0 / (4.0 * half_width * half_width), 1.0),
        }
    }

    /// Bounded support half-width, if any.
    pub fn support(&self) -> Option<f64> {
        match self {
            Family::IsotropicCube => Some(SQRT3),
            Family::UniformSquare { half_width } => Some(*half_width),
            _ => None,
        }
    }

    /// One-dimensional coordinate density.
    pub fn density_1d(&self, x: f64) -> f64 {
        match self {
            Family::StandardGaussian => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Family::IsotropicLaplace => {
                let s = std::f64::consts::SQRT_2;
                (s / 2.0) * (-s * x.abs()).exp()
            }
            Family::IsotropicCube | Family::UniformSquare { .. } => {
                let h = self.support().unwrap();
                if x.abs() <= h {
                    0.5 / h
                } else {
                    0.0
                }
            }
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Family::StandardGaussian => rng.sample(StandardNormal),
            Family::IsotropicCube | Family::UniformSquare { .. } => {
                let h = self.support().unwrap();
                rng.gen_range(-h..h)
            }
            Family::IsotropicLaplace => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                let b = std::f64::consts::FRAC_1_SQRT_2;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSpec {
    pub family: Family,
    pub dim: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl MarginalSpec {
    /// Spec with the family's shipped `(L, R)`.
    pub fn new(family: Family, dim: usize) -> Self {
        let (l, r) = family.default_lr();
        Self { family, dim, l, r }
    }

    pub fn gaussian(dim: usize) -> Self {
        Self::new(Family::StandardGaussian, dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if !(self.l > 0.0 && self.l <= 1.0 && self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "(L, R) = ({}, {}) must lie in (0, 1]",
                self.l, self.r
            )));
        }
        if let Family::UniformSquare { half_width } = self.family {
            if !(half_width > 0.0 && half_width.is_finite()) {
                return Err(Error::InvalidParameter("half_width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Fill `out` with the feature vector of global row `row`.
    pub fn draw_row(&self, key: &RowKey, row: u64, out: &mut [f64]) {
        let mut rng = key.row(row);
        for v in out.iter_mut() {
            *v = self.family.draw(&mut rng);
        }
    }
}

/// `n` i.i.d. rows; row `i` depends only on `(seed, i)`.
pub fn sample(spec: &MarginalSpec, n: usize, seed: u64) -> Matrix {
    sample_rows(spec, 0, n, &RowKey::new(seed, Domain::Features))
}

/// Rows `start..start + n` of the stream identified by `key`.
pub fn sample_rows(spec: &MarginalSpec, start: u64, n: usize, key: &RowKey) -> Matrix {
    let d = spec.dim;
    let mut m = Matrix::zeros(n, d);
    m.data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| spec.draw_row(key, start + i as u64, row));
    m
}

/// Density of the projection onto the plane spanned by `frame` at `x`.
///
/// Gaussian accepts any orthonormal frame. Product families accept frames
/// inside a coordinate plane, where the projected density is the product of
/// the two coordinate densities.
pub fn projected_density(spec: &MarginalSpec, frame: &[Vec<f64>; 2], x: [f64; 2]) -> Result<f64> {
    let d = spec.dim;
    if frame[0].len() != d || frame[1].len() != d {
        return Err(Error::DimMismatch { expected: d, got: frame[0].len() });
    }
    let g = [
        dot(&frame[0], &frame[0]) - 1.0,
        dot(&frame[1], &frame[1]) - 1.0,
        dot(&frame[0], &frame[1]),
    ];
    if g.iter().any(|v| v.abs() > 1e-8) {
        return Err(Error::InvalidParameter("frame is not orthonormal".into()));
    }
    match spec.family {
        Family::StandardGaussian => {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Ok((-0.5 * r2).exp() / (2.0 * std::f64::consts::PI))
        }
        fam => {
            let support: Vec<usize> =
                (0..d).filter(|&i| frame[0][i].abs() > 1e-15 || frame[1][i].abs() > 1e-15).collect();
            if support.len() != 2 {
                return Err(Error::Unsupported(
                    "projected density of a product family needs a frame inside a coordinate plane"
                        .into(),
                ));
            }
            let p = |i: usize| x[0] * frame[0][i] + x[1] * frame[1][i];
            Ok(fam.density_1d(p(support[0])) * fam.density_1d(p(support[1])))
        }
    }
}

fn random_frame(spec: &MarginalSpec, k: u64, seed: u64) -> [Vec<f64>; 2] {
    let d = spec.dim;
    let mut rng = RowKey::new(seed, Domain::Frames).row(k);
    match spec.family {
        Family::StandardGaussian => loop {
            let a: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let na = dot(&a, &a).sqrt();
            let a: Vec<f64> = a.iter().map(|v| v / na).collect();
            let c = dot(&a, &b);
            let b: Vec<f64> = b.iter().zip(&a).map(|(v, u)| v - c * u).collect();
            let nb = dot(&b, &b).sqrt();
            if nb > 1e-6 {
                return [a, b.iter().map(|v| v / nb).collect()];
            }
        },
        _ => {
            let i = rng.gen_range(0..d);
            let mut j = rng.gen_range(0..d - 1);
            if j >= i {
                j += 1;
            }
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            a[i] = th.cos();
            a[j] = th.sin();
            b[i] = -th.sin();
            b[j] = th.cos();
            [a, b]
        }
    }
}

fn axis_frames(d: usize) -> Vec<[Vec<f64>; 2]> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            a[i] = 1.0;
            b[j] = 1.0;
            out.push([a, b]);
        }
    }
    out
}

/// Check both well-behavedness inequalities on axis-pair frames plus 32
/// random rotations.
///
/// Lower bound: square grid on `‖x‖∞ ≤ R`. Upper bound: polar grid with
/// radial step `grid_step` and 256 angles out to radius 50.
pub fn certify_well_behaved(spec: &MarginalSpec, l: f64, r: f64, grid_step: f64) -> CertReport {
    assert!(grid_step > 0.0 && grid_step <= 0.05, "grid_step must be in (0, 0.05]");
    let subject = format!("{:?} d={} (L={l}, R={r})", spec.family, spec.dim);
    if spec.dim < 2 {
        return CertReport::from_checks(
            subject,
            vec![CertCheck { condition: "dim >= 2".into(), margin: -1.0, worst_at: 0.0 }],
        );
    }
    let mut frames = axis_frames(spec.dim);
    frames.extend((0..32).map(|k| random_frame(spec, k, 0x5eed)));

    let nl = (2.0 * r / grid_step).ceil() as usize;
    let nr = (50.0 / grid_step).ceil() as usize;
    let results: Vec<((f64, f64), (f64, f64))> = frames
        .par_iter()
        .map(|f| {
            let mut low = (f64::INFINITY, 0.0);
            for a in 0..=nl {
                for b in 0..=nl {
                    let x = [-r + 2.0 * r * a as f64 / nl as f64, -r + 2.0 * r * b as f64 / nl as f64];
                    let g = projected_density(spec, f, x).unwrap_or(f64::NAN);
                    if g - l < low.0 || g.is_nan() {
                        low = (g - l, x[0].abs().max(x[1].abs()));
                    }
                }
            }
            let mut up = (f64::INFINITY, 0.0);
            for k in 0..=nr {
                let rad = 50.0 * k as f64 / nr as f64;
                let env = (-l * rad).exp() / l;
                for m in 0..256 {
                    let th = std::f64::consts::TAU * m as f64 / 256.0;
                    let g = projected_density(spec, f, [rad * th.cos(), rad * th.sin()])
                        .unwrap_or(f64::NAN);
                    if env - g < up.0 || g.is_nan() {
                        up = (env - g, rad);
                    }
                }
            }
            (low, up)
        })
        .collect();
    let fold = |sel: fn(&((f64, f64), (f64, f64))) -> (f64, f64)| {
        results.iter().map(sel).fold((f64::INFINITY, 0.0), |acc, v| {
            if v.0 < acc.0 || v.0.is_nan() {
                v
            } else {
                acc
            }
        })
    };
    let low = fold(|p| p.0);
    let up = fold(|p| p.1);
    CertReport::from_checks(
        subject,
        vec![
            CertCheck { condition: "density >= L on |x|_inf <= R".into(), margin: low.0, worst_at: low.1 },
            CertCheck {
                condition: "density <= exp(-L|x|)/L".into(),
                margin: up.0,
                worst_at: up.1,
            },
        ],
    )
}

//! Labeled datasets: realizable, adversarially corrupted, halfspace, and the
//! bad-local-minimum construction.
//!
//! Every dataset records a [`LabelModel`], a description of its labels as a
//! function of `x` (plus a per-row sign for `random_sign`). The same model
//! drives fresh-sample sources and the population oracles, so a corruption
//! calibrated on one sample can be reused at population level.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activations::{builtin_sigmoidal, Activation};
use crate::distributions::{sample, sample_rows, MarginalSpec};
use crate::error::{Error, Result};
use crate::numeric::{dot, fmt17, norm2, reduce_rows, Matrix};
use crate::quadrature::Line;
use crate::rng::{Domain, RowKey};

/// Clean labels before noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Base {
    /// `σ(w*·x)`.
    Neuron { act: Activation, w_star: Vec<f64> },
    /// `sign(w*·x)` with ties labelled +1.
    Halfspace { w_star: Vec<f64> },
    /// `r̂(x₁ / eps)`, the five-piece hat ramp.
    HatRamp { eps: f64 },
    /// Ramp labels `r(x₁)` rewritten near the origin so that `−e₁` becomes a
    /// local minimum of the ramp loss: `−x₁` on `|x₁| ≤ 1`, `−sign(x₁)` out to
    /// `1 + shelf`, then `bump·sign(x₁)` for a further `bump_width`.
    TrapRamp { shelf: f64, bump: f64, bump_width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FlipSlab,
    ShiftWorst,
    RandomSign,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FlipSlab, Strategy::ShiftWorst, Strategy::RandomSign];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FlipSlab => "flip_slab",
            Strategy::ShiftWorst => "shift_worst",
            Strategy::RandomSign => "random_sign",
        }
    }
}

/// Label corruption, expressed through `t = w*·x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    None,
    /// On `t ∈ [lo, hi)` the label is replaced by its flip (see [`flip_value`]).
    Slab { lo: f64, hi: f64 },
    /// Where `|t| ≥ threshold` the label moves by `amount` against `sign(t)`.
    Shift { threshold: f64, amount: f64 },
    /// Each row moves by `±amp`, sign drawn from the row's noise stream.
    RandomSign { amp: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    pub base: Base,
    pub noise: Noise,
}

fn sign_plus(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// The hat ramp: −1 for t ≤ −2, +1 on [−2, −1], −t on [−1, 1], −1 on [1, 2], +1 for t ≥ 2.
pub fn hat_ramp(t: f64) -> f64 {
    if t < -2.0 {
        -1.0
    } else if t <= -1.0 {
        1.0
    } else if t <= 1.0 {
        -t
    } else if t < 2.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn trap_ramp(t: f64, shelf: f64, bump: f64, bump_width: f64) -> f64 {
    let a = t.abs();
    let s = sign_plus(t);
    if a <= 1.0 {
        -t
    } else if a < 1.0 + shelf {
        -s
    } else if a < 1.0 + shelf + bump_width {
        bump * s
    } else {
        s
    }
}

/// The noisy loss-surface configuration: uniform marginal on `[−2, 2]²`,
/// ramp labels trapped at `−e₁`.
pub fn trap_ramp_model() -> LabelModel {
    LabelModel::clean(Base::TrapRamp { shelf: 0.15, bump: 3.0, bump_width: 0.4 })
}

/// Value a slab-corrupted label takes: the opposite end of a bounded
/// activation's range, the negated label otherwise.
pub fn flip_value(base: &Base, t: f64, clean: f64) -> f64 {
    match base {
        Base::Neuron { act, .. } => {
            let (lo, hi) = act.limits();
            if lo.is_finite() && hi.is_finite() {
                if t >= 0.0 {
                    lo
                } else {
                    hi
                }
            } else {
                -clean
            }
        }
        _ => -clean,
    }
}

impl LabelModel {
    pub fn clean(base: Base) -> Self {
        Self { base, noise: Noise::None }
    }

    pub fn direction(&self) -> Option<&[f64]> {
        match &self.base {
            Base::Neuron { w_star, .. } | Base::Halfspace { w_star } => Some(w_star),
            Base::HatRamp { .. } | Base::TrapRamp { .. } => None,
        }
    }

    pub fn dim_ok(&self, d: usize) -> bool {
        self.direction().map_or(true, |w| w.len() == d)
    }

    fn t(&self, x: &[f64]) -> f64 {
        match self.direction() {
            Some(w) => dot(w, x),
            None => x[0],
        }
    }

    pub fn clean_label(&self, x: &[f64]) -> f64 {
        match &self.base {
            Base::Neuron { act, w_star } => act.eval(dot(w_star, x)),
            Base::Halfspace { w_star } => sign_plus(dot(w_star, x)),
            Base::HatRamp { eps } => hat_ramp(x[0] / eps),
            Base::TrapRamp { shelf, bump, bump_width } => trap_ramp(x[0], *shelf, *bump, *bump_width),
        }
    }

    /// The label's possible values at `x` with their probabilities.
    pub fn outcomes(&self, x: &[f64]) -> [(f64, f64); 2] {
        let c = self.clean_label(x);
        match &self.noise {
            Noise::None => [(c, 1.0), (0.0, 0.0)],
            Noise::Slab { lo, hi } => {
                let t = self.t(x);
                if t >= *lo && t < *hi {
                    [(flip_value(&self.base, t, c), 1.0), (0.0, 0.0)]
                } else {
                    [(c, 1.0), (0.0, 0.0)]
                }
            }
            Noise::Shift { threshold, amount } => {
                let t = self.t(x);
                if t.abs() >= *threshold {
                    [(c - amount * sign_plus(t), 1.0), (0.0, 0.0)]
                } else {
                    [(c, 1.0), (0.0, 0.0)]
                }
            }
            Noise::RandomSign { amp, .. } => [(c + amp, 0.5), (c - amp, 0.5)],
        }
    }

    /// Label of global row `row` at `x`.
    pub fn label(&self, x: &[f64], row: u64) -> f64 {
        match &self.noise {
            Noise::RandomSign { amp, seed } => {
                let s = if RowKey::new(*seed, Domain::Noise).row(row).gen::<bool>() { 1.0 } else { -1.0 };
                self.clean_label(x) + s * amp
            }
            _ => self.outcomes(x)[0].0,
        }
    }

    /// Lines along which the label is not smooth.
    pub fn lines(&self, d: usize) -> Vec<Line> {
        let mut out = Vec::new();
        let along = |a: &[f64], c: f64| Line { a: a.to_vec(), c };
        match &self.base {
            Base::Neuron { act, w_star } => {
                for &k in act.kinks() {
                    out.push(along(w_star, k));
                }
            }
            Base::Halfspace { w_star } => out.push(along(w_star, 0.0)),
            Base::HatRamp { eps } => {
                let e1 = crate::numeric::unit(d, 0);
                for k in [-2.0, -1.0, 1.0, 2.0] {
                    out.push(along(&e1, k * eps));
                }
            }
            Base::TrapRamp { shelf, bump_width, .. } => {
                let e1 = crate::numeric::unit(d, 0);
                for k in [1.0, 1.0 + shelf, 1.0 + shelf + bump_width] {
                    out.push(along(&e1, k));
                    out.push(along(&e1, -k));
                }
            }
        }
        let dir: Vec<f64> = match self.direction() {
            Some(w) => w.to_vec(),
            None => crate::numeric::unit(d, 0),
        };
        match &self.noise {
            Noise::Slab { lo, hi } => {
                out.push(along(&dir, *lo));
                out.push(along(&dir, *hi));
                out.push(along(&dir, 0.0));
            }
            Noise::Shift { threshold, .. } => {
                out.push(along(&dir, *threshold));
                out.push(along(&dir, -threshold));
                out.push(along(&dir, 0.0));
            }
            _ => {}
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub marginal: MarginalSpec,
    pub labels: LabelModel,
    /// Reference vector with small loss (`w*`, or `v` for the bad instance).
    pub w_star: Option<Vec<f64>>,
    /// The bad stationary point, for the bad instance.
    pub bad_point: Option<Vec<f64>>,
    pub nominal_eps: Option<f64>,
    pub seed: u64,
    pub generator: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    fn from_model(marginal: &MarginalSpec, labels: LabelModel, n: usize, seed: u64, generator: &str) -> Result<Self> {
        marginal.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if !labels.dim_ok(marginal.dim) {
            return Err(Error::DimMismatch {
                expected: marginal.dim,
                got: labels.direction().map_or(0, |w| w.len()),
            });
        }
        let x = sample(marginal, n, seed);
        let y = label_rows(&labels, &x, 0);
        let w_star = labels.direction().map(|w| w.to_vec());
        Ok(Self {
            x,
            y,
            meta: DatasetMeta {
                marginal: marginal.clone(),
                labels,
                w_star,
                bad_point: None,
                nominal_eps: None,
                seed,
                generator: generator.into(),
            },
        })
    }
}

fn label_rows(labels: &LabelModel, x: &Matrix, start: u64) -> Vec<f64> {
    use rayon::prelude::*;
    (0..x.rows())
        .into_par_iter()
        .map(|i| labels.label(x.row(i), start + i as u64))
        .collect()
}

/// A generative instance: draws rows `start..start+n` of a fixed stream.
#[derive(Clone, Debug)]
pub struct InstanceSource {
    pub marginal: MarginalSpec,
    pub labels: LabelModel,
    pub seed: u64,
}

impl InstanceSource {
    pub fn draw(&self, start: u64, n: usize) -> (Matrix, Vec<f64>) {
        let x = sample_rows(&self.marginal, start, n, &RowKey::new(self.seed, Domain::Fresh));
        let y = label_rows(&self.labels, &x, start);
        (x, y)
    }
}

pub fn make_realizable(marginal: &MarginalSpec, act: &Activation, w_star: &[f64], n: usize, seed: u64) -> Result<LabeledDataset> {
    if w_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("w_star".into()));
    }
    let model = LabelModel::clean(Base::Neuron { act: act.clone(), w_star: w_star.to_vec() });
    let mut ds = LabeledDataset::from_model(marginal, model, n, seed, "realizable")?;
    ds.meta.nominal_eps = Some(0.0);
    Ok(ds)
}

/// A clean sample from any label model.
pub fn make_from_model(marginal: &MarginalSpec, labels: LabelModel, n: usize, seed: u64, generator: &str) -> Result<LabeledDataset> {
    LabeledDataset::from_model(marginal, labels, n, seed, generator)
}

/// Noiseless halfspace labels `sign(w*·x)`.
pub fn make_halfspace(marginal: &MarginalSpec, w_star: &[f64], n: usize, seed: u64) -> Result<LabeledDataset> {
    let model = LabelModel::clean(Base::Halfspace { w_star: w_star.to_vec() });
    let mut ds = LabeledDataset::from_model(marginal, model, n, seed, "halfspace")?;
    ds.meta.nominal_eps = Some(0.0);
    Ok(ds)
}

/// The bad-local-minimum instance under a gaussian marginal, ramp activation.
pub fn bad_local_min_instance(d: usize, eps: f64, n: usize, seed: u64) -> Result<LabeledDataset> {
    if d == 0 || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("need d ≥ 1 and eps ∈ (0, 1], got d={d}, eps={eps}")));
    }
    let model = LabelModel::clean(Base::HatRamp { eps });
    let mut ds = LabeledDataset::from_model(&MarginalSpec::gaussian(d), model, n, seed, "bad_local_min")?;
    let mut v = vec![0.0; d];
    v[0] = 1.0 / eps;
    ds.meta.bad_point = Some(v.iter().map(|a| -a).collect());
    ds.meta.w_star = Some(v);
    ds.meta.nominal_eps = Some(eps);
    Ok(ds)
}

/// The activation the bad instance is built for.
pub fn bad_instance_activation() -> Activation {
    builtin_sigmoidal("ramp").expect("ramp is built in").into()
}

/// `(1/2n) Σ (σ(w_ref·x_i) − y_i)²`.
pub fn corruption_level(ds: &LabeledDataset, w_ref: &[f64], act: &Activation) -> Result<f64> {
    if w_ref.len() != ds.dim() {
        return Err(Error::DimMismatch { expected: ds.dim(), got: w_ref.len() });
    }
    let s = reduce_rows(ds.n(), 1, |i, acc| {
        let r = act.eval(dot(w_ref, ds.x.row(i))) - ds.y[i];
        acc[0] += r * r;
    });
    Ok(0.5 * s[0] / ds.n() as f64)
}

/// Fraction of rows at the far end of the target direction that shift_worst moves.
pub const SHIFT_FRACTION: f64 = 0.05;
/// Slabs start at `SLAB_START · ‖w*‖` along `w*`.
pub const SLAB_START: f64 = 0.5;

/// Calibrate a corruption of the given strategy so the dataset's
/// corruption level at `w*` does not exceed `eps`.
pub fn calibrate_noise(ds: &LabeledDataset, eps: f64, strategy: Strategy, seed: u64) -> Result<Noise> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    let w = ds
        .meta
        .labels
        .direction()
        .ok_or_else(|| Error::InvalidParameter("dataset has no target direction".into()))?
        .to_vec();
    let n = ds.n();
    let ts: Vec<f64> = (0..n).map(|i| dot(&w, ds.x.row(i))).collect();
    match strategy {
        Strategy::RandomSign => Ok(Noise::RandomSign { amp: (2.0 * eps).sqrt(), seed }),
        Strategy::ShiftWorst => {
            let k = ((SHIFT_FRACTION * n as f64).ceil() as usize).clamp(1, n);
            let mut mags: Vec<f64> = ts.iter().map(|t| t.abs()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let threshold = if k < n { 0.5 * (mags[k - 1] + mags[k]) } else { 0.0 };
            let moved = ts.iter().filter(|t| t.abs() >= threshold).count();
            Ok(Noise::Shift { threshold, amount: (2.0 * eps * n as f64 / moved as f64).sqrt() })
        }
        Strategy::FlipSlab => {
            let lo = SLAB_START * norm2(&w);
            let mut idx: Vec<usize> = (0..n).filter(|&i| ts[i] >= lo).collect();
            idx.sort_by(|&a, &b| ts[a].partial_cmp(&ts[b]).unwrap());
            let budget = 2.0 * n as f64 * eps;
            let mut used = 0.0;
            let mut take = 0;
            for &i in &idx {
                let c = ds.meta.labels.clean_label(ds.x.row(i));
                let f = flip_value(&ds.meta.labels.base, ts[i], c);
                let cost = (f - c) * (f - c);
                if used + cost > budget {
                    break;
                }
                used += cost;
                take += 1;
            }
            if take == idx.len() && used < 0.9 * budget {
                return Err(Error::Budget(format!(
                    "flip_slab saturates at corruption {:.6e} < eps {eps:.6e}",
                    used / (2.0 * n as f64)
                )));
            }
            let hi = if take == 0 {
                lo
            } else if take < idx.len() {
                0.5 * (ts[idx[take - 1]] + ts[idx[take]])
            } else {
                f64::INFINITY
            };
            Ok(Noise::Slab { lo, hi })
        }
    }
}

/// Corrupt a realizable (or halfspace) dataset with L2 budget `eps`.
pub fn corrupt_l2_budget(ds: &LabeledDataset, eps: f64, strategy: Strategy, seed: u64) -> Result<LabeledDataset> {
    if !matches!(ds.meta.labels.noise, Noise::None) {
        return Err(Error::InvalidParameter("dataset is already corrupted".into()));
    }
    let noise = calibrate_noise(ds, eps, strategy, seed)?;
    let labels = LabelModel { base: ds.meta.labels.base.clone(), noise };
    let y = label_rows(&labels, &ds.x, 0);
    let mut meta = ds.meta.clone();
    meta.labels = labels;
    meta.nominal_eps = Some(eps);
    meta.generator = format!("{}+{}", ds.meta.generator, strategy.name());
    Ok(LabeledDataset { x: ds.x.clone(), y, meta })
}

/// Flip halfspace labels on a slab holding a `rate` fraction of the sample.
pub fn flip_halfspace_slab(ds: &LabeledDataset, rate: f64) -> Result<LabeledDataset> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidParameter(format!("rate {rate} not in (0, 1)")));
    }
    // A flip costs (2)² / 2 = 2 per row in the L2 budget.
    let eps = 2.0 * rate;
    let mut out = corrupt_l2_budget(ds, eps, Strategy::FlipSlab, ds.meta.seed)?;
    out.meta.nominal_eps = Some(rate);
    Ok(out)
}

/// Write `x_1..x_d,y` rows with 17 significant digits.
pub fn write_csv<W: Write>(ds: &LabeledDataset, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let d = ds.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    wr.write_record(&header).map_err(io_err)?;
    let mut rec = Vec::with_capacity(d + 1);
    for i in 0..ds.n() {
        rec.clear();
        rec.extend(ds.x.row(i).iter().map(|v| fmt17(*v)));
        rec.push(fmt17(ds.y[i]));
        wr.write_record(&rec).map_err(io_err)?;
    }
    wr.flush().map_err(|e| Error::Unsupported(format!("io: {e}")))?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Unsupported(format!("csv: {e}"))
}

/// Read rows written by [`write_csv`]; metadata comes from the sidecar.
pub fn read_csv<R: Read>(r: R, meta: DatasetMeta) -> Result<LabeledDataset> {
    let mut rd = csv::Reader::from_reader(r);
    let d = rd.headers().map_err(io_err)?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut y = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(io_err)?;
        for (j, f) in rec.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::InvalidParameter(format!("bad number {f:?}")))?;
            if j < d {
                data.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let n = y.len();
    Ok(LabeledDataset { x: Matrix::from_vec(n, d, data), y, meta })
}

pub fn save(ds: &LabeledDataset, csv_path: &Path, meta_path: &Path) -> std::io::Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    write_csv(ds, f).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
    let m = serde_json::to_string_pretty(&ds.meta)?;
    std::fs::write(meta_path, m + "\n")
}

pub fn load(csv_path: &Path, meta_path: &Path) -> std::io::Result<LabeledDataset> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
    let f = std::io::BufReader::new(std::fs::File::open(csv_path)?);
    read_csv(f, meta).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

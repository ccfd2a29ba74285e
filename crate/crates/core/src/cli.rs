//! Config-driven commands behind the `neuron-landscape` binary.
//!
//! Each command reads one JSON document, resolves every default, and writes
//! its artifacts under an output directory. Reports embed the resolved
//! config. Nothing written depends on the thread count or on wall-clock time.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::activations::{builtin, certify_sigmoidal, certify_unbounded, Activation, CertReport};
use crate::distributions::{certify_well_behaved, Family, MarginalSpec};
use crate::error::Error;
use crate::instances::{
    bad_local_min_instance, corrupt_l2_budget, flip_halfspace_slab, make_from_model, make_halfspace,
    make_realizable, read_csv, write_csv, Base, DatasetMeta, InstanceSource, LabelModel, LabeledDataset, Strategy,
};
use crate::landscape::{
    grid_stationary_cells, grid_with_gradients, stationarity_check, write_grid_csv, Oracle, StationarityParams,
    StationarityVerdict, StationaryCell,
};
use crate::loss::{population_loss_mc, LossSpec, McEstimate};
use crate::numeric::fmt17;
use crate::optimizer::{
    gd_sigmoidal, gd_unbounded, kappa, schedule_for, schedule_unbounded, sigmoidal_smoothness, stable_eta, Batch,
    Divergence, GdConfig, RunReport, ScheduleConstants, SigmoidalSchedule, UnboundedSchedule,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Certification(_) => 5,
            CliError::Run(Error::InvalidParameter(_) | Error::Unknown { .. } | Error::DimMismatch { .. }) => 2,
            CliError::Run(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Landscape,
    Certify,
}

#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// What a command leaves for the caller to print.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// The single stdout line, if the command has one.
    pub stdout: Option<String>,
    /// Diagnostics for stderr.
    pub log: Vec<String>,
    pub files: Vec<PathBuf>,
}

// ---------------------------------------------------------------------------
// Config pieces shared by several commands.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    pub family: Family,
    pub dim: usize,
    #[serde(rename = "L", default)]
    pub l: Option<f64>,
    #[serde(rename = "R", default)]
    pub r: Option<f64>,
}

impl MarginalConfig {
    fn resolve(&mut self) -> CliResult<MarginalSpec> {
        let (l0, r0) = self.family.default_lr();
        let l = *self.l.get_or_insert(l0);
        let r = *self.r.get_or_insert(r0);
        let spec = MarginalSpec { family: self.family, dim: self.dim, l, r };
        spec.validate()?;
        Ok(spec)
    }
}

/// A built-in activation by name, with any certified constant overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl ActivationConfig {
    pub fn named(name: &str) -> Self {
        Self { name: name.into(), shape: None, tau: None, mu: None, xi: None, alpha: None, lambda: None }
    }

    fn resolve(&mut self) -> CliResult<Activation> {
        let mut act = builtin(&self.name, self.shape)?;
        match &mut act {
            Activation::Sigmoidal(a) => {
                if self.alpha.is_some() || self.lambda.is_some() {
                    return Err(CliError::Schema(format!("`alpha`/`lambda` do not apply to sigmoidal `{}`", self.name)));
                }
                a.tau = *self.tau.get_or_insert(a.tau);
                a.mu = *self.mu.get_or_insert(a.mu);
                a.xi = *self.xi.get_or_insert(a.xi);
            }
            Activation::Unbounded(a) => {
                if self.tau.is_some() || self.mu.is_some() || self.xi.is_some() {
                    return Err(CliError::Schema(format!("`tau`/`mu`/`xi` do not apply to unbounded `{}`", self.name)));
                }
                a.alpha = *self.alpha.get_or_insert(a.alpha);
                a.lambda = *self.lambda.get_or_insert(a.lambda);
            }
        }
        Ok(act)
    }
}

fn default_shelf() -> f64 {
    0.15
}
fn default_bump() -> f64 {
    3.0
}
fn default_bump_width() -> f64 {
    0.4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceConfig {
    Realizable { activation: ActivationConfig, w_star: Vec<f64> },
    Halfspace { w_star: Vec<f64> },
    BadLocalMin { eps: f64 },
    TrapRamp {
        #[serde(default = "default_shelf")]
        shelf: f64,
        #[serde(default = "default_bump")]
        bump: f64,
        #[serde(default = "default_bump_width")]
        bump_width: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionConfig {
    /// Calibrated to population-style budget `eps` at `w*`.
    L2Budget { strategy: Strategy, eps: f64 },
    /// Halfspace labels flipped on a slab of the given mass.
    HalfspaceSlab { rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub marginal: MarginalConfig,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub corruption: Option<CorruptionConfig>,
    pub n: usize,
}

impl SourceConfig {
    fn build(&mut self, seed: u64) -> CliResult<LabeledDataset> {
        let marginal = self.marginal.resolve()?;
        let n = self.n;
        let ds = match &mut self.instance {
            InstanceConfig::Realizable { activation, w_star } => {
                let act = activation.resolve()?;
                make_realizable(&marginal, &act, w_star, n, seed)?
            }
            InstanceConfig::Halfspace { w_star } => make_halfspace(&marginal, w_star, n, seed)?,
            InstanceConfig::BadLocalMin { eps } => {
                if marginal.family != Family::StandardGaussian {
                    return Err(CliError::Schema("`bad_local_min` needs the standard_gaussian marginal".into()));
                }
                bad_local_min_instance(marginal.dim, *eps, n, seed)?
            }
            InstanceConfig::TrapRamp { shelf, bump, bump_width } => {
                let labels =
                    LabelModel::clean(Base::TrapRamp { shelf: *shelf, bump: *bump, bump_width: *bump_width });
                make_from_model(&marginal, labels, n, seed, "trap_ramp")?
            }
        };
        Ok(match &self.corruption {
            None => ds,
            Some(CorruptionConfig::L2Budget { strategy, eps }) => corrupt_l2_budget(&ds, *eps, *strategy, seed)?,
            Some(CorruptionConfig::HalfspaceSlab { rate }) => flip_halfspace_slab(&ds, *rate)?,
        })
    }
}

fn default_out() -> String {
    ".".into()
}

fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        if key == "?" || key == "." {
            CliError::Schema(format!("{}: {}", path.display(), e.inner()))
        } else {
            CliError::Schema(format!("{}: at `{key}`: {}", path.display(), e.inner()))
        }
    })
}

fn out_dir(inv: &Invocation, configured: &str) -> CliResult<PathBuf> {
    let dir = inv.out.clone().unwrap_or_else(|| PathBuf::from(configured));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn run(inv: &Invocation) -> CliResult<Outcome> {
    match inv.command {
        Command::Generate => cmd_generate(inv),
        Command::Train => cmd_train(inv),
        Command::Landscape => cmd_landscape(inv),
        Command::Certify => cmd_certify(inv),
    }
}

// ---------------------------------------------------------------------------
// generate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    pub marginal: MarginalConfig,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub corruption: Option<CorruptionConfig>,
    pub n: usize,
}

#[derive(Serialize)]
struct GeneratedMeta<'a> {
    config: &'a GenerateConfig,
    rows: usize,
    dim: usize,
    dataset: &'a DatasetMeta,
}

pub fn cmd_generate(inv: &Invocation) -> CliResult<Outcome> {
    let mut cfg: GenerateConfig = load_config(&inv.config)?;
    if let Some(s) = inv.seed {
        cfg.seed = s;
    }
    let mut src = SourceConfig {
        marginal: cfg.marginal.clone(),
        instance: cfg.instance.clone(),
        corruption: cfg.corruption.clone(),
        n: cfg.n,
    };
    let ds = src.build(cfg.seed)?;
    cfg.marginal = src.marginal;
    cfg.instance = src.instance;
    let dir = out_dir(inv, &cfg.out)?;
    let csv_path = dir.join("dataset.csv");
    let meta_path = dir.join("dataset.json");
    let f = File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(&ds, BufWriter::new(f)).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    write_json(&meta_path, &GeneratedMeta { config: &cfg, rows: ds.n(), dim: ds.dim(), dataset: &ds.meta })?;
    Ok(Outcome {
        stdout: Some(format!("rows={}", ds.n())),
        log: vec![format!("wrote {} rows to {}", ds.n(), csv_path.display())],
        files: vec![csv_path, meta_path],
    })
}

/// Reads a dataset written by `generate`.
pub fn load_generated(csv_path: &Path, meta_path: &Path) -> CliResult<LabeledDataset> {
    #[derive(Deserialize)]
    struct Meta {
        dataset: DatasetMeta,
    }
    let text = fs::read_to_string(meta_path).map_err(io_err(meta_path))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", meta_path.display())))?;
    let f = File::open(csv_path).map_err(io_err(csv_path))?;
    read_csv(std::io::BufReader::new(f), meta.dataset).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))
}

// ---------------------------------------------------------------------------
// train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Files from `generate`; `csv` and `meta` are paths.
    Files { csv: String, meta: String },
    /// Generated in place. For unbounded runs this sample only calibrates
    /// the corruption; training draws fresh rows from the same model.
    Generate(SourceConfig),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(rename = "trunc_M", default, skip_serializing_if = "Option::is_none")]
    pub trunc_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n_mc: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_w() -> f64 {
    1.0
}
fn default_max_t() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    pub activation: ActivationConfig,
    pub data: DataConfig,
    pub eps: f64,
    #[serde(rename = "W", default = "default_w")]
    pub w_bound: f64,
    #[serde(default)]
    pub constants: ScheduleConstants,
    #[serde(default)]
    pub overrides: Overrides,
    /// Ceiling on the iteration count when the schedule asks for more.
    #[serde(rename = "max_T", default = "default_max_t")]
    pub max_t: usize,
    /// Cap the sigmoidal step at `1/(ρ + β)`.
    #[serde(default)]
    pub stable_eta: bool,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub evaluate: Option<EvalConfig>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleInfo {
    Sigmoidal(SigmoidalSchedule),
    Unbounded(UnboundedSchedule),
}

/// Every reported loss is `(1/2) mean (σ(w·x) − y)²`.
pub const LOSS_CONVENTION: &str = "half_squared";

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub loss_convention: String,
    pub config: TrainConfig,
    pub activation: Activation,
    pub marginal: MarginalSpec,
    pub labels: LabelModel,
    pub schedule: ScheduleInfo,
    pub gd: GdConfig,
    pub t_capped: bool,
    pub iterations_run: usize,
    pub final_loss: f64,
    pub final_w: Vec<f64>,
    pub samples_drawn: u64,
    pub diverged: Option<Divergence>,
    pub population_loss: Option<McEstimate>,
}

fn write_trace(path: &Path, r: &RunReport) -> CliResult<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f));
    let e = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(["t", "loss", "grad_l2", "grad_dual", "w_norm"]).map_err(e)?;
    for &t in &r.kept {
        if t >= r.losses.len() {
            continue;
        }
        let dual = r.grad_dual[t].map(fmt17).unwrap_or_default();
        w.write_record([t.to_string(), fmt17(r.losses[t]), fmt17(r.grad_l2[t]), dual, fmt17(r.w_norm[t])])
            .map_err(e)?;
    }
    w.flush().map_err(io_err(path))
}

fn capped(t: f64, max_t: usize) -> (usize, bool) {
    if t.is_finite() && t <= max_t as f64 {
        (t.max(1.0) as usize, false)
    } else {
        (max_t, true)
    }
}

pub fn cmd_train(inv: &Invocation) -> CliResult<Outcome> {
    let mut cfg: TrainConfig = load_config(&inv.config)?;
    if let Some(s) = inv.seed {
        cfg.seed = s;
    }
    let mut log = Vec::new();
    let act = cfg.activation.resolve()?;
    let ds = match &mut cfg.data {
        DataConfig::Files { csv, meta } => load_generated(Path::new(csv), Path::new(meta))?,
        DataConfig::Generate(src) => src.build(cfg.seed)?,
    };
    let marginal = ds.meta.marginal.clone();
    let o = cfg.overrides.clone();
    let (report, schedule, gd, t_capped) = match &act {
        Activation::Sigmoidal(a) => {
            let s = schedule_for(a, marginal.l, marginal.r, cfg.eps, &cfg.constants)?;
            let rho = o.rho.unwrap_or(s.rho);
            let mut eta = o.eta.unwrap_or(s.eta);
            if cfg.stable_eta {
                eta = stable_eta(eta, rho, sigmoidal_smoothness(a, marginal.dim));
            }
            let (t, t_capped) = match o.t {
                Some(t) => (t, false),
                None => capped(s.t, cfg.max_t),
            };
            if t_capped {
                log.push(format!("scheduled T = {:e} capped at {}", s.t, cfg.max_t));
            }
            let gd = GdConfig {
                eta,
                t,
                rho,
                trunc_m: o.trunc_m.unwrap_or(s.trunc_m),
                batch: Batch::FixedSample(ds.n()),
                seed: cfg.seed,
                eps_target: cfg.eps,
            };
            if let Some(init) = &cfg.init {
                if init.len() != marginal.dim {
                    return Err(CliError::Schema(format!("`init` has length {}, expected {}", init.len(), marginal.dim)));
                }
            }
            let r = gd_sigmoidal(&ds, &act, &gd, cfg.init.as_deref())?;
            (r, ScheduleInfo::Sigmoidal(s), gd, t_capped)
        }
        Activation::Unbounded(a) => {
            if cfg.init.is_some() {
                return Err(CliError::Schema("`init` is not supported for unbounded activations".into()));
            }
            let s = schedule_unbounded(
                marginal.l,
                marginal.r,
                a.alpha,
                a.lambda,
                cfg.w_bound,
                cfg.eps,
                marginal.dim,
                &cfg.constants,
            )?;
            let (t, t_capped) = match o.t {
                Some(t) => (t, false),
                None => capped(s.t as f64, cfg.max_t),
            };
            if t_capped {
                log.push(format!("scheduled T = {} capped at {}", s.t, cfg.max_t));
            }
            let gd = GdConfig {
                eta: o.eta.unwrap_or(s.eta),
                t,
                rho: o.rho.unwrap_or(0.0),
                trunc_m: o.trunc_m.unwrap_or(s.trunc_m),
                batch: Batch::FreshPerStep(o.n_per_step.unwrap_or(s.n_per_step)),
                seed: cfg.seed,
                eps_target: cfg.eps,
            };
            let src = InstanceSource { marginal: marginal.clone(), labels: ds.meta.labels.clone(), seed: cfg.seed };
            let r = gd_unbounded(&src, &act, &gd)?;
            (r, ScheduleInfo::Unbounded(s), gd, t_capped)
        }
    };
    log.push(format!("wall time {:.3} s", report.wall_time));

    let population_loss = match (&cfg.evaluate, &report.diverged) {
        (Some(ev), None) => {
            let spec = LossSpec::plain(act.clone());
            Some(population_loss_mc(&marginal, &ds.meta.labels, &spec, &report.final_w, ev.n_mc, ev.seed)?)
        }
        _ => None,
    };
    let final_loss = report.losses.last().copied().unwrap_or(f64::NAN);
    let summary = TrainSummary {
        loss_convention: LOSS_CONVENTION.into(),
        config: cfg.clone(),
        activation: act,
        marginal,
        labels: ds.meta.labels.clone(),
        schedule,
        gd,
        t_capped,
        iterations_run: report.losses.len().saturating_sub(1),
        final_loss,
        final_w: report.final_w.clone(),
        samples_drawn: report.samples_drawn,
        diverged: report.diverged.clone(),
        population_loss,
    };
    let dir = out_dir(inv, &cfg.out)?;
    let sum_path = dir.join("summary.json");
    let trace_path = dir.join("trace.csv");
    write_json(&sum_path, &summary)?;
    write_trace(&trace_path, &report)?;
    if let Some(d) = &report.diverged {
        return Err(CliError::Diverged(format!(
            "iteration {}: {} (partial trace in {})",
            d.iteration,
            d.reason,
            trace_path.display()
        )));
    }
    Ok(Outcome { stdout: Some(format!("final_loss={}", fmt17(final_loss))), log, files: vec![sum_path, trace_path] })
}

// ---------------------------------------------------------------------------
// landscape

fn default_lo() -> f64 {
    -2.0
}
fn default_hi() -> f64 {
    2.0
}
fn default_res() -> usize {
    50
}
fn default_true() -> bool {
    true
}
fn default_c() -> f64 {
    0.01
}
fn default_p() -> f64 {
    10.0
}
fn default_calibration_n() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LandscapeMode {
    Grid {
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        #[serde(default = "default_res")]
        res: usize,
        /// Also report the grid's discrete local minima.
        #[serde(default = "default_true")]
        minima: bool,
    },
    Verdict {
        w: Vec<f64>,
        eps: f64,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_p")]
        p: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    pub marginal: MarginalConfig,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub corruption: Option<CorruptionConfig>,
    /// Rows used to calibrate a corruption.
    #[serde(default = "default_calibration_n")]
    pub calibration_n: usize,
    pub activation: ActivationConfig,
    #[serde(default)]
    pub rho: f64,
    #[serde(rename = "trunc_M", default)]
    pub trunc_m: Option<f64>,
    #[serde(default = "Oracle::quadrature")]
    pub oracle: Oracle,
    pub mode: LandscapeMode,
}

#[derive(Serialize)]
struct GridReport<'a> {
    config: &'a LandscapeConfig,
    labels: &'a LabelModel,
    minima: Vec<StationaryCell>,
}

#[derive(Serialize)]
struct VerdictReport<'a> {
    config: &'a LandscapeConfig,
    labels: &'a LabelModel,
    kappa: f64,
    verdict: StationarityVerdict,
}

pub fn cmd_landscape(inv: &Invocation) -> CliResult<Outcome> {
    let mut cfg: LandscapeConfig = load_config(&inv.config)?;
    if let Some(s) = inv.seed {
        cfg.seed = s;
        if let Oracle::MonteCarlo { seed, .. } = &mut cfg.oracle {
            *seed = s;
        }
    }
    let act = cfg.activation.resolve()?;
    let mut src = SourceConfig {
        marginal: cfg.marginal.clone(),
        instance: cfg.instance.clone(),
        corruption: cfg.corruption.clone(),
        n: cfg.calibration_n,
    };
    let ds = src.build(cfg.seed)?;
    cfg.marginal = src.marginal;
    cfg.instance = src.instance;
    let marginal = ds.meta.marginal.clone();
    let labels = ds.meta.labels.clone();
    let spec = LossSpec { act: act.clone(), rho: cfg.rho, trunc_m: cfg.trunc_m };
    spec.validate()?;
    let dir = out_dir(inv, &cfg.out)?;
    match cfg.mode.clone() {
        LandscapeMode::Grid { lo, hi, res, minima } => {
            let grid = grid_with_gradients(&marginal, &labels, &spec, lo, hi, res, &cfg.oracle)?;
            let rows: Vec<[f64; 3]> = grid.iter().map(|c| [c.w[0], c.w[1], c.f]).collect();
            let grid_path = dir.join("grid.csv");
            let f = File::create(&grid_path).map_err(io_err(&grid_path))?;
            write_grid_csv(&rows, BufWriter::new(f)).map_err(|e| CliError::Io(e.to_string()))?;
            let mins = if minima {
                grid_stationary_cells(&grid, res, &marginal, &labels, &spec, &cfg.oracle)?
            } else {
                Vec::new()
            };
            let rep_path = dir.join("minima.json");
            write_json(&rep_path, &GridReport { config: &cfg, labels: &labels, minima: mins.clone() })?;
            Ok(Outcome {
                stdout: Some(format!("cells={} minima={}", rows.len(), mins.len())),
                log: mins.iter().map(|m| format!("local minimum near {:?}, F = {:.6}", m.refined_w, m.f)).collect(),
                files: vec![grid_path, rep_path],
            })
        }
        LandscapeMode::Verdict { w, eps, c, p } => {
            if w.len() != marginal.dim {
                return Err(CliError::Schema(format!("`mode.w` has length {}, expected {}", w.len(), marginal.dim)));
            }
            let k = match &act {
                Activation::Sigmoidal(a) => kappa(marginal.l, marginal.r, a.tau, a.mu, a.xi),
                Activation::Unbounded(a) => a.alpha / a.lambda,
            };
            let verdict =
                stationarity_check(&marginal, &labels, &spec, marginal.r, k, &w, eps, &StationarityParams { c, p }, &cfg.oracle)?;
            let path = dir.join("verdict.json");
            let line = format!("approx_stationary={} loss={}", verdict.is_approx_stationary, fmt17(verdict.loss));
            write_json(&path, &VerdictReport { config: &cfg, labels: &labels, kappa: k, verdict })?;
            Ok(Outcome { stdout: Some(line), log: Vec::new(), files: vec![path] })
        }
    }
}

// ---------------------------------------------------------------------------
// certify

fn default_activations() -> Vec<ActivationConfig> {
    let mut v: Vec<ActivationConfig> =
        ["logistic", "tanh", "ramp", "erf", "relu", "softplus"].iter().map(|n| ActivationConfig::named(n)).collect();
    v.push(ActivationConfig { shape: Some(0.1), ..ActivationConfig::named("leaky_relu") });
    v.push(ActivationConfig { shape: Some(1.0), ..ActivationConfig::named("elu") });
    v
}

fn default_marginals() -> Vec<MarginalConfig> {
    [Family::StandardGaussian, Family::IsotropicCube, Family::IsotropicLaplace, Family::UniformSquare { half_width: 2.0 }]
        .into_iter()
        .map(|family| MarginalConfig { family, dim: 2, l: None, r: None })
        .collect()
}

fn default_act_step() -> f64 {
    1e-3
}
fn default_marginal_step() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default = "default_activations")]
    pub activations: Vec<ActivationConfig>,
    #[serde(default = "default_marginals")]
    pub marginals: Vec<MarginalConfig>,
    #[serde(default = "default_act_step")]
    pub activation_grid_step: f64,
    #[serde(default = "default_marginal_step")]
    pub marginal_grid_step: f64,
}

#[derive(Serialize)]
struct CertifyReport<'a> {
    config: &'a CertifyConfig,
    reports: Vec<CertReport>,
    pass: bool,
}

pub fn cmd_certify(inv: &Invocation) -> CliResult<Outcome> {
    let mut cfg: CertifyConfig = load_config(&inv.config)?;
    if let Some(s) = inv.seed {
        cfg.seed = s;
    }
    if !(cfg.activation_grid_step > 0.0 && cfg.activation_grid_step <= 0.01) {
        return Err(CliError::Schema("`activation_grid_step` must lie in (0, 0.01]".into()));
    }
    if !(cfg.marginal_grid_step > 0.0 && cfg.marginal_grid_step <= 0.05) {
        return Err(CliError::Schema("`marginal_grid_step` must lie in (0, 0.05]".into()));
    }
    let mut reports = Vec::new();
    for a in cfg.activations.iter_mut() {
        reports.push(match a.resolve()? {
            Activation::Sigmoidal(s) => certify_sigmoidal(&s, cfg.activation_grid_step),
            Activation::Unbounded(u) => certify_unbounded(&u, cfg.activation_grid_step),
        });
    }
    for m in cfg.marginals.iter_mut() {
        let spec = m.resolve()?;
        reports.push(certify_well_behaved(&spec, spec.l, spec.r, cfg.marginal_grid_step));
    }
    let pass = reports.iter().all(|r| r.pass);
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.subject.clone()).collect();
    let dir = out_dir(inv, &cfg.out)?;
    let path = dir.join("certify.json");
    write_json(&path, &CertifyReport { config: &cfg, reports, pass })?;
    if !pass {
        return Err(CliError::Certification(failed.join("; ")));
    }
    Ok(Outcome { stdout: Some("certified=true".into()), log: Vec::new(), files: vec![path] })
}

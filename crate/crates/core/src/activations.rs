//! Sigmoidal and unbounded activation families.
//!
//! A sigmoidal activation carries `(tau, mu, xi)`: derivative at least `tau`
//! on [-1, 1], derivative at most `xi * exp(-mu |t|)` everywhere. An unbounded
//! one carries `(alpha, lambda)`: derivative at least `alpha` on [0, inf) and
//! `lambda`-Lipschitz. Kinks use the right derivative, so `ramp'(1) = 0` and
//! `relu'(0) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    Logistic,
    Tanh,
    Ramp,
    Erf,
    Relu,
    LeakyRelu { slope: f64 },
    Elu { scale: f64 },
    Softplus,
}

impl Kind {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Kind::Logistic => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
            Kind::Tanh => t.tanh(),
            Kind::Ramp => t.clamp(-1.0, 1.0),
            Kind::Erf => erf(t),
            Kind::Relu => t.max(0.0),
            Kind::LeakyRelu { slope } => {
                if t >= 0.0 {
                    t
                } else {
                    slope * t
                }
            }
            Kind::Elu { scale } => {
                if t >= 0.0 {
                    t
                } else {
                    scale * t.exp_m1()
                }
            }
            Kind::Softplus => {
                if t > 30.0 {
                    t + (-t).exp()
                } else {
                    t.exp().ln_1p()
                }
            }
        }
    }

    /// Right derivative.
    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            Kind::Logistic => {
                let s = Kind::Logistic.eval(t);
                s * (1.0 - s)
            }
            Kind::Tanh => {
                let c = t.cosh();
                if c.is_finite() {
                    1.0 / (c * c)
                } else {
                    0.0
                }
            }
            Kind::Ramp => {
                if (-1.0..1.0).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Erf => std::f64::consts::FRAC_2_SQRT_PI * (-t * t).exp(),
            Kind::Relu => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::LeakyRelu { slope } => {
                if t >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Kind::Elu { scale } => {
                if t >= 0.0 {
                    1.0
                } else {
                    scale * t.exp()
                }
            }
            Kind::Softplus => Kind::Logistic.eval(t),
        }
    }

    /// Left derivative; differs from [`Kind::deriv`] only at kinks.
    pub fn deriv_left(&self, t: f64) -> f64 {
        match *self {
            Kind::Ramp => {
                if t > -1.0 && t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::LeakyRelu { slope } => {
                if t > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Kind::Elu { scale } => {
                if t > 0.0 {
                    1.0
                } else {
                    scale * t.exp()
                }
            }
            k => k.deriv(t),
        }
    }

    /// Points where the activation or its derivative is not smooth.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Kind::Ramp => &[-1.0, 1.0],
            Kind::Relu | Kind::LeakyRelu { .. } | Kind::Elu { .. } => &[0.0],
            _ => &[],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kind::Logistic => "logistic",
            Kind::Tanh => "tanh",
            Kind::Ramp => "ramp",
            Kind::Erf => "erf",
            Kind::Relu => "relu",
            Kind::LeakyRelu { .. } => "leaky_relu",
            Kind::Elu { .. } => "elu",
            Kind::Softplus => "softplus",
        }
    }

    /// Limits at -inf and +inf.
    pub fn limits(&self) -> (f64, f64) {
        match self {
            Kind::Logistic => (0.0, 1.0),
            Kind::Tanh | Kind::Ramp | Kind::Erf => (-1.0, 1.0),
            Kind::Relu | Kind::Softplus => (0.0, f64::INFINITY),
            Kind::LeakyRelu { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Kind::Elu { scale } => (-scale, f64::INFINITY),
        }
    }
}

/// The ramp `clamp(t, -1, 1)`.
pub fn ramp(t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("ramp({t})")));
    }
    Ok(Kind::Ramp.eval(t))
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidalActivation {
    pub kind: Kind,
    pub tau: f64,
    pub mu: f64,
    pub xi: f64,
    /// Subtracted from the raw output; nonzero after [`normalize_at_zero`].
    #[serde(default)]
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnboundedActivation {
    pub kind: Kind,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default)]
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Activation {
    Sigmoidal(SigmoidalActivation),
    Unbounded(UnboundedActivation),
}

impl SigmoidalActivation {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
    pub fn eval(&self, t: f64) -> f64 {
        self.kind.eval(t) - self.shift
    }
    pub fn deriv(&self, t: f64) -> f64 {
        self.kind.deriv(t)
    }
    /// `2 xi / mu`, the bound on `|σ(a) - σ(b)|`.
    pub fn range_bound(&self) -> f64 {
        2.0 * self.xi / self.mu
    }
}

impl UnboundedActivation {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
    pub fn eval(&self, t: f64) -> f64 {
        self.kind.eval(t) - self.shift
    }
    pub fn deriv(&self, t: f64) -> f64 {
        self.kind.deriv(t)
    }
}

impl Activation {
    pub fn kind(&self) -> Kind {
        match self {
            Activation::Sigmoidal(a) => a.kind,
            Activation::Unbounded(a) => a.kind,
        }
    }
    pub fn shift(&self) -> f64 {
        match self {
            Activation::Sigmoidal(a) => a.shift,
            Activation::Unbounded(a) => a.shift,
        }
    }
    pub fn name(&self) -> &'static str {
        self.kind().name()
    }
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.kind().eval(t) - self.shift()
    }
    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        self.kind().deriv(t)
    }
    pub fn kinks(&self) -> &'static [f64] {
        self.kind().kinks()
    }
    pub fn as_sigmoidal(&self) -> Option<&SigmoidalActivation> {
        match self {
            Activation::Sigmoidal(a) => Some(a),
            _ => None,
        }
    }
    pub fn as_unbounded(&self) -> Option<&UnboundedActivation> {
        match self {
            Activation::Unbounded(a) => Some(a),
            _ => None,
        }
    }
    /// Output limits at -inf and +inf after the shift.
    pub fn limits(&self) -> (f64, f64) {
        let (lo, hi) = self.kind().limits();
        (lo - self.shift(), hi - self.shift())
    }
}

impl From<SigmoidalActivation> for Activation {
    fn from(a: SigmoidalActivation) -> Self {
        Activation::Sigmoidal(a)
    }
}

impl From<UnboundedActivation> for Activation {
    fn from(a: UnboundedActivation) -> Self {
        Activation::Unbounded(a)
    }
}

/// Built-in sigmoidal with its certified `(tau, mu, xi)`.
///
/// `erf` is not listed with parameters alongside the others; its triple is
/// derived from `erf'(t) = 2/√π e^{-t²}`: the minimum on [-1, 1] is 0.4151 and
/// `max_t e^{-t² + |t|} = e^{1/4}` gives `xi = 2/√π e^{1/4} ≈ 1.4489`.
pub fn builtin_sigmoidal(name: &str) -> Result<SigmoidalActivation> {
    let (kind, tau, mu, xi) = match name {
        "logistic" => (Kind::Logistic, 0.19, 1.0, 1.0),
        "tanh" => (Kind::Tanh, 0.4, 1.0, 1.4),
        "ramp" => (Kind::Ramp, 1.0, 1.0, 3.0),
        "erf" => (Kind::Erf, 0.41, 1.0, 1.45),
        _ => {
            return Err(Error::Unknown {
                kind: "sigmoidal activation",
                name: name.into(),
            })
        }
    };
    Ok(SigmoidalActivation { kind, tau, mu, xi, shift: 0.0 })
}

/// Built-in unbounded activation with `(alpha, lambda)`.
///
/// `shape` is the slope for `leaky_relu` (in (0, 1]) and the scale for `elu` (> 0).
pub fn builtin_unbounded(name: &str, shape: Option<f64>) -> Result<UnboundedActivation> {
    let need = |what: &str| {
        shape.ok_or_else(|| Error::InvalidParameter(format!("{name} requires a {what}")))
    };
    let (kind, alpha, lambda) = match name {
        "relu" => (Kind::Relu, 1.0, 1.0),
        "softplus" => (Kind::Softplus, 0.5, 1.0),
        "leaky_relu" => {
            let s = need("slope")?;
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidParameter(format!("leaky_relu slope {s} not in (0, 1]")));
            }
            (Kind::LeakyRelu { slope: s }, 1.0, 1.0)
        }
        "elu" => {
            let a = need("scale")?;
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("elu scale {a} must be > 0")));
            }
            (Kind::Elu { scale: a }, 1.0, a.max(1.0))
        }
        _ => {
            return Err(Error::Unknown {
                kind: "unbounded activation",
                name: name.into(),
            })
        }
    };
    Ok(UnboundedActivation { kind, alpha, lambda, shift: 0.0 })
}

/// Look up any built-in by name.
pub fn builtin(name: &str, shape: Option<f64>) -> Result<Activation> {
    match builtin_sigmoidal(name) {
        Ok(a) => Ok(a.into()),
        Err(_) => builtin_unbounded(name, shape).map(Into::into),
    }
}

/// Shift the activation so it vanishes at zero; returns the offset to subtract from labels.
pub fn normalize_at_zero(act: &Activation) -> (Activation, f64) {
    let offset = act.eval(0.0);
    let mut out = act.clone();
    match &mut out {
        Activation::Sigmoidal(a) => a.shift += offset,
        Activation::Unbounded(a) => a.shift += offset,
    }
    (out, offset)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertCheck {
    pub condition: String,
    /// Smallest slack over the grid; negative means violated.
    pub margin: f64,
    pub worst_at: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertReport {
    pub subject: String,
    pub checks: Vec<CertCheck>,
    pub pass: bool,
}

impl CertReport {
    pub fn from_checks(subject: String, checks: Vec<CertCheck>) -> Self {
        let pass = checks.iter().all(|c| c.margin >= -1e-12);
        Self { subject, checks, pass }
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |k| lo + (hi - lo) * k as f64 / n as f64)
}

/// Grid check of the three sigmoidal conditions.
///
/// The lower bound on [-1, 1] uses the one-sided derivative that points into
/// the interval, so a kink sitting exactly on ±1 is judged from inside.
/// Tails beyond |t| = 50 are covered by monotone decay of every built-in's
/// derivative past its last kink.
pub fn certify_sigmoidal(act: &SigmoidalActivation, grid_step: f64) -> CertReport {
    assert!(grid_step > 0.0 && grid_step <= 0.01, "grid_step must be in (0, 0.01]");
    let k = act.kind;
    let mut lower = (f64::INFINITY, 0.0);
    for t in grid(-1.0, 1.0, grid_step) {
        let d = if t >= 1.0 { k.deriv_left(t) } else { k.deriv(t) };
        if d - act.tau < lower.0 {
            lower = (d - act.tau, t);
        }
    }
    let mut upper = (f64::INFINITY, 0.0);
    let mut lo_val = f64::INFINITY;
    let mut hi_val = f64::NEG_INFINITY;
    let mut mono = (f64::INFINITY, 0.0);
    let mut prev = f64::NEG_INFINITY;
    for t in grid(-50.0, 50.0, grid_step) {
        let env = act.xi * (-act.mu * t.abs()).exp();
        for d in [k.deriv(t), k.deriv_left(t)] {
            if env - d < upper.0 {
                upper = (env - d, t);
            }
        }
        let v = k.eval(t);
        lo_val = lo_val.min(v);
        hi_val = hi_val.max(v);
        if v - prev < mono.0 {
            mono = (v - prev, t);
        }
        prev = v;
    }
    let (lim_lo, lim_hi) = k.limits();
    let spread = (lim_hi - lim_lo).max(hi_val - lo_val);
    let checks = vec![
        CertCheck { condition: "deriv >= tau on [-1,1]".into(), margin: lower.0, worst_at: lower.1 },
        CertCheck {
            condition: "deriv <= xi*exp(-mu|t|)".into(),
            margin: upper.0,
            worst_at: upper.1,
        },
        CertCheck {
            condition: "range <= 2xi/mu".into(),
            margin: act.range_bound() - spread,
            worst_at: f64::INFINITY,
        },
        CertCheck { condition: "non-decreasing".into(), margin: mono.0, worst_at: mono.1 },
    ];
    CertReport::from_checks(
        format!("{}(tau={}, mu={}, xi={})", k.name(), act.tau, act.mu, act.xi),
        checks,
    )
}

/// Grid check of the unbounded conditions: derivative floor on [0, 50],
/// derivative ceiling (Lipschitz) on [-50, 50], monotonicity.
pub fn certify_unbounded(act: &UnboundedActivation, grid_step: f64) -> CertReport {
    assert!(grid_step > 0.0 && grid_step <= 0.01, "grid_step must be in (0, 0.01]");
    let k = act.kind;
    let mut floor = (f64::INFINITY, 0.0);
    for t in grid(0.0, 50.0, grid_step) {
        let d = k.deriv(t);
        if d - act.alpha < floor.0 {
            floor = (d - act.alpha, t);
        }
    }
    let mut lip = (f64::INFINITY, 0.0);
    let mut mono = (f64::INFINITY, 0.0);
    let mut prev = f64::NEG_INFINITY;
    for t in grid(-50.0, 50.0, grid_step) {
        for d in [k.deriv(t), k.deriv_left(t)] {
            if act.lambda - d < lip.0 {
                lip = (act.lambda - d, t);
            }
        }
        let v = k.eval(t);
        if v - prev < mono.0 {
            mono = (v - prev, t);
        }
        prev = v;
    }
    let checks = vec![
        CertCheck { condition: "deriv >= alpha on [0,inf)".into(), margin: floor.0, worst_at: floor.1 },
        CertCheck { condition: "deriv <= lambda".into(), margin: lip.0, worst_at: lip.1 },
        CertCheck { condition: "non-decreasing".into(), margin: mono.0, worst_at: mono.1 },
    ];
    CertReport::from_checks(
        format!("{}(alpha={}, lambda={})", k.name(), act.alpha, act.lambda),
        checks,
    )
}

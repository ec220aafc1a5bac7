//! Analytically known survival and censoring models.
//!
//! A [`JointModel`] pairs a survival law `F` with a censoring law `G`. The
//! observed time `X = min(T, C)` then has survivor `1 − H = (1 − G)·S`.
//! Only continuous models are provided, so left limits coincide with
//! values: `S(x−) = S(x)` and `1 − G(x−) = 1 − G(x)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Open01;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::operators::kprime;
use crate::quadrature::{integrate, integrate_fallible, TailOutcome, TailSchedule, Tolerance};
use crate::survival::{sort_censored, CensoredObservation, CensoredSample};

/// A distribution of survival times on `(0, ∞)`.
pub trait SurvivalModel: fmt::Debug + Send + Sync {
    /// `S(x) = P(T > x)`.
    fn survival(&self, x: f64) -> f64;

    /// `F(x) = 1 − S(x)`.
    fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// `Λ(x) = ∫_(0,x] dF / S(t−)`.
    fn cumulative_hazard(&self, x: f64) -> f64;

    fn density(&self, x: f64) -> Option<f64>;

    /// Hazard rate `f(x) / S(x)`.
    fn hazard(&self, x: f64) -> Option<f64> {
        self.density(x).map(|f| f / self.survival(x))
    }

    fn quantile(&self, p: f64) -> Option<f64>;

    /// `S⁻¹(v)` for `v ∈ (0, 1]`; precise for tiny `v`, unlike `quantile(1 − v)`.
    fn inverse_survival(&self, v: f64) -> Option<f64>;

    /// `S⁻¹(S(x)·w)`: the point beyond `x` that leaves a fraction `w` of
    /// the remaining mass above it.
    fn conditional_inverse(&self, x: f64, w: f64) -> Option<f64> {
        self.inverse_survival(self.survival(x) * w)
    }

    /// `τ_F = sup{x : F(x) < 1}`.
    fn support_end(&self) -> f64;

    fn is_continuous(&self) -> bool;

    /// Mini-language form, e.g. `exp:1`.
    fn descriptor(&self) -> String;

    /// Rate of an exponential law; used to select closed forms.
    fn exponential_rate(&self) -> Option<f64> {
        None
    }
}

pub type SharedModel = Arc<dyn SurvivalModel>;

/// Exponential survival, `S(x) = e^{−rate·x}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponential {
    rate: f64,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl SurvivalModel for Exponential {
    fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.rate * x).exp()
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }

    fn cumulative_hazard(&self, x: f64) -> f64 {
        self.rate * x.max(0.0)
    }

    fn density(&self, x: f64) -> Option<f64> {
        Some(if x < 0.0 {
            0.0
        } else {
            self.rate * (-self.rate * x).exp()
        })
    }

    fn hazard(&self, _x: f64) -> Option<f64> {
        Some(self.rate)
    }

    fn quantile(&self, p: f64) -> Option<f64> {
        (0.0..=1.0).contains(&p).then(|| -(-p).ln_1p() / self.rate)
    }

    fn inverse_survival(&self, v: f64) -> Option<f64> {
        (v > 0.0 && v <= 1.0).then(|| -v.ln() / self.rate)
    }

    fn conditional_inverse(&self, x: f64, w: f64) -> Option<f64> {
        (w > 0.0 && w <= 1.0).then(|| x.max(0.0) - w.ln() / self.rate)
    }

    fn support_end(&self) -> f64 {
        f64::INFINITY
    }

    fn is_continuous(&self) -> bool {
        true
    }

    fn descriptor(&self) -> String {
        format!("exp:{}", self.rate)
    }

    fn exponential_rate(&self) -> Option<f64> {
        Some(self.rate)
    }
}

/// Builds an exponential survival model.
pub fn exponential_model(rate: f64) -> Result<SharedModel> {
    Ok(Arc::new(Exponential::new(rate)?))
}

/// A censoring law `G`, described through its survivor `1 − G`.
pub trait CensoringModel: fmt::Debug + Send + Sync {
    /// `1 − G(x)`.
    fn survivor(&self, x: f64) -> f64;

    /// `1 − G(x−)`.
    fn survivor_left(&self, x: f64) -> f64 {
        self.survivor(x)
    }

    /// Inverse of `1 − G` on `(0, 1]`; `+∞` means "never censored".
    fn inverse_survivor(&self, v: f64) -> Option<f64>;

    fn support_end(&self) -> f64;

    fn is_continuous(&self) -> bool;

    fn descriptor(&self) -> String;

    /// Koziol–Green exponent, when this is a proportional censoring law.
    fn koziol_green_gamma(&self) -> Option<f64> {
        None
    }
}

pub type SharedCensoring = Arc<dyn CensoringModel>;

/// No censoring: `G` is degenerate at `+∞`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Uncensored;

impl CensoringModel for Uncensored {
    fn survivor(&self, _x: f64) -> f64 {
        1.0
    }

    fn inverse_survivor(&self, _v: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }

    fn support_end(&self) -> f64 {
        f64::INFINITY
    }

    fn is_continuous(&self) -> bool {
        true
    }

    fn descriptor(&self) -> String {
        "none".into()
    }

    fn koziol_green_gamma(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Proportional censoring `1 − G = S^γ`.
#[derive(Clone, Debug)]
pub struct KoziolGreenCensoring {
    base: SharedModel,
    gamma: f64,
}

impl KoziolGreenCensoring {
    pub fn new(base: SharedModel, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Koziol-Green gamma must be non-negative, got {gamma}"
            )));
        }
        Ok(Self { base, gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl CensoringModel for KoziolGreenCensoring {
    fn survivor(&self, x: f64) -> f64 {
        if self.gamma == 0.0 {
            return 1.0;
        }
        match self.base.exponential_rate() {
            Some(rate) => (-self.gamma * rate * x.max(0.0)).exp(),
            None => self.base.survival(x).powf(self.gamma),
        }
    }

    fn inverse_survivor(&self, v: f64) -> Option<f64> {
        if self.gamma == 0.0 {
            return Some(f64::INFINITY);
        }
        self.base.inverse_survival(v.powf(1.0 / self.gamma))
    }

    fn support_end(&self) -> f64 {
        if self.gamma == 0.0 {
            f64::INFINITY
        } else {
            self.base.support_end()
        }
    }

    fn is_continuous(&self) -> bool {
        self.base.is_continuous()
    }

    fn descriptor(&self) -> String {
        format!("kg:{}", self.gamma)
    }

    fn koziol_green_gamma(&self) -> Option<f64> {
        Some(self.gamma)
    }
}

/// A survival law together with its censoring law.
#[derive(Clone, Debug)]
pub struct JointModel {
    pub survival: SharedModel,
    pub censoring: SharedCensoring,
    tau: f64,
}

impl JointModel {
    pub fn new(survival: SharedModel, censoring: SharedCensoring) -> Self {
        let tau = survival.support_end().min(censoring.support_end());
        Self {
            survival,
            censoring,
            tau,
        }
    }

    pub fn uncensored(survival: SharedModel) -> Self {
        Self::new(survival, Arc::new(Uncensored))
    }

    /// `τ = sup{t : 1 − H(t) > 0}`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `1 − H(x) = (1 − G(x))·S(x)`.
    pub fn observed_survivor(&self, x: f64) -> f64 {
        self.censoring.survivor(x) * self.survival.survival(x)
    }

    pub fn is_continuous(&self) -> bool {
        self.survival.is_continuous() && self.censoring.is_continuous()
    }

    /// `F(τ)`.
    pub fn mass_at_tau(&self) -> f64 {
        if self.tau.is_infinite() {
            1.0
        } else {
            self.survival.cdf(self.tau)
        }
    }

    /// `P(Δ = 1) = ∫ (1 − G(x−)) dF(x)`.
    pub fn event_probability(&self) -> Result<f64> {
        expect_df(
            &*self.survival,
            |x| self.censoring.survivor_left(x),
            0.0,
            self.tau,
        )
    }

    pub fn descriptor(&self) -> String {
        format!(
            "{} {}",
            self.survival.descriptor(),
            self.censoring.descriptor()
        )
    }
}

/// `∫_lo^hi g(x) dF(x)` for continuous `F`, integrated in the survival
/// coordinate `v = S(x)` so the far tail keeps full relative precision.
pub fn expect_df<G: FnMut(f64) -> f64>(
    model: &dyn SurvivalModel,
    g: G,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    expect_df_with(model, g, lo, hi, &[], Tolerance::OUTER)
}

pub(crate) fn expect_df_with<G: FnMut(f64) -> f64>(
    model: &dyn SurvivalModel,
    mut g: G,
    lo: f64,
    hi: f64,
    kinks: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    if !model.is_continuous() {
        return Err(Error::ModelNotContinuous(model.descriptor()));
    }
    if hi <= lo {
        return Ok(0.0);
    }
    let v_hi = model.survival(lo);
    let v_lo = if hi.is_finite() {
        model.survival(hi)
    } else {
        0.0
    };
    let breaks: Vec<f64> = kinks
        .iter()
        .filter(|&&k| k > lo && k < hi)
        .map(|&k| model.survival(k))
        .collect();
    let inv = |v: f64| {
        model
            .inverse_survival(v)
            .ok_or_else(|| Error::QuadratureFailure(format!("no inverse survival at {v}")))
    };
    let mut failure = None;
    let out = integrate(
        |v| match inv(v) {
            Ok(x) => g(x),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        v_lo,
        v_hi,
        &breaks,
        tol,
    );
    match failure {
        Some(e) => Err(e),
        None => out,
    }
}

/// `(1/S(x)) ∫_x^hi h(s) dF(s)`, the mean of `h(T)` given `T > x`
/// (restricted to `T ≤ hi`). `kinks` are points where `h` is not smooth.
pub(crate) fn tail_mean<H: FnMut(f64) -> Result<f64>>(
    model: &dyn SurvivalModel,
    x: f64,
    hi: f64,
    mut h: H,
    kinks: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    if !model.is_continuous() {
        return Err(Error::ModelNotContinuous(model.descriptor()));
    }
    let sx = model.survival(x);
    if sx <= 0.0 {
        return Err(Error::SingularSurvival { x });
    }
    if hi <= x {
        return Ok(0.0);
    }
    let w_lo = if hi.is_finite() {
        model.survival(hi) / sx
    } else {
        0.0
    };
    let breaks: Vec<f64> = kinks
        .iter()
        .filter(|&&k| k > x && k < hi)
        .map(|&k| model.survival(k) / sx)
        .collect();
    integrate_fallible(
        |w| {
            let s = model.conditional_inverse(x, w).ok_or_else(|| {
                Error::QuadratureFailure(format!("no inverse survival beyond {x}"))
            })?;
            h(s)
        },
        w_lo,
        1.0,
        &breaks,
        tol,
    )
}

/// [`expect_df`] on `[0, hi)` that reports a non-settling integral as
/// [`Error::DivergentIntegral`], with partial integrals over
/// `S(x) ∈ [10^{-2k}, 1]` as evidence.
pub fn expect_df_checked<G: Fn(f64) -> f64>(
    model: &dyn SurvivalModel,
    g: G,
    hi: f64,
    what: &str,
) -> Result<f64> {
    match expect_df(model, &g, 0.0, hi) {
        Err(Error::QuadratureFailure(msg)) if msg.starts_with("no convergence") => {
            let mut evidence = Vec::new();
            for k in 1..=6 {
                let cut = model
                    .inverse_survival(10f64.powi(-2 * k))
                    .unwrap_or(f64::INFINITY)
                    .min(hi);
                let partial = expect_df_with(
                    model,
                    &g,
                    0.0,
                    cut,
                    &[],
                    Tolerance::OUTER.with_max_intervals(20_000),
                )
                .unwrap_or(f64::NAN);
                evidence.push(partial);
            }
            Err(Error::DivergentIntegral {
                what: what.to_string(),
                evidence,
            })
        }
        other => other,
    }
}

/// Proportional-censoring joint model `1 − G = S^γ`.
pub fn koziol_green(base: SharedModel, gamma: f64) -> Result<JointModel> {
    let censoring = KoziolGreenCensoring::new(base.clone(), gamma)?;
    Ok(JointModel::new(base, Arc::new(censoring)))
}

/// Draws `n` censored pairs by inverse-CDF sampling of `T` and `C`.
pub fn sample_censored<R: Rng + ?Sized>(
    joint: &JointModel,
    n: usize,
    rng: &mut R,
) -> Result<CensoredSample> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        raw.push(draw_pair(joint, rng)?);
    }
    sort_censored(raw)
}

pub(crate) fn draw_pair<R: Rng + ?Sized>(
    joint: &JointModel,
    rng: &mut R,
) -> Result<CensoredObservation> {
    let u: f64 = rng.sample(Open01);
    let w: f64 = rng.sample(Open01);
    let t = joint
        .survival
        .inverse_survival(u)
        .ok_or_else(|| Error::ModelNotSamplable(joint.survival.descriptor()))?;
    let c = joint
        .censoring
        .inverse_survivor(w)
        .ok_or_else(|| Error::ModelNotSamplable(joint.censoring.descriptor()))?;
    Ok(if t <= c {
        CensoredObservation::event(t)
    } else {
        CensoredObservation::censored(c)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// Non-degenerate regime, `√n` scaling.
    Condition1,
    /// Degenerate regime, `n` scaling.
    Condition2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionPart {
    pub label: &'static str,
    pub outcome: TailOutcome,
}

/// Finite/divergent verdict for the integrals of one condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionDiagnostic {
    pub which: Condition,
    pub finite: bool,
    pub parts: Vec<ConditionPart>,
}

/// Evaluates the integrability conditions of the requested regime on a
/// geometrically growing truncation `[0, T]`, `T = T₀·2^k`.
pub fn condition_check(
    joint: &JointModel,
    kernel: &Kernel,
    which: Condition,
) -> Result<ConditionDiagnostic> {
    let f = &*joint.survival;
    if !joint.is_continuous() {
        return Err(Error::ModelNotContinuous(joint.descriptor()));
    }
    let dens = |x: f64| f.density(x).unwrap_or(0.0);
    let inv_g = |x: f64| 1.0 / joint.censoring.survivor_left(x);
    let start = f
        .quantile(0.99)
        .filter(|q| q.is_finite() && *q > 0.0)
        .unwrap_or(1.0);
    let start = if joint.tau().is_finite() {
        start.min(joint.tau())
    } else {
        start
    };
    let tau = joint.tau();
    let schedule = TailSchedule::new(start);
    let clip = |x: f64| x.min(tau);
    let tol = Tolerance::new(1e-300, 1e-9);

    // ∫∫_{[0,T]²} w(x) w'(y) K(x,y)² dF dF, increment from [0,lo]² to [0,hi]².
    let double =
        |wx: &dyn Fn(f64) -> f64, wy: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Result<f64> {
            let (lo, hi) = (clip(lo), clip(hi));
            if hi <= lo {
                return Ok(0.0);
            }
            let breaks = dyadic_breaks(start, hi);
            let inner = |x: f64, a: f64, b: f64| -> Result<f64> {
                let mut bk = breaks.clone();
                bk.push(x);
                integrate(
                    |y| {
                        let k = kernel.eval(x, y);
                        k * k * wy(y) * dens(y)
                    },
                    a,
                    b,
                    &bk,
                    tol,
                )
            };
            // strip [lo, hi] × [0, hi]
            let strip = integrate_fallible(
                |x| Ok(wx(x) * dens(x) * inner(x, 0.0, hi)?),
                lo,
                hi,
                &breaks,
                tol,
            )?;
            // strip [0, lo] × [lo, hi]
            let rest = integrate_fallible(
                |x| Ok(wx(x) * dens(x) * inner(x, lo, hi)?),
                0.0,
                lo,
                &breaks,
                tol,
            )?;
            Ok(strip + rest)
        };

    let kp = kprime(f_arc(joint), kernel)?;
    let single = |w: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Result<f64> {
        let (lo, hi) = (clip(lo), clip(hi));
        if hi <= lo {
            return Ok(0.0);
        }
        integrate_fallible(
            |x| Ok(w(x) * kp.eval(x, x)?.abs() * dens(x)),
            lo,
            hi,
            &dyadic_breaks(start, hi),
            tol,
        )
    };

    let one = |_: f64| 1.0;
    let parts = match which {
        Condition::Condition1 => {
            let i = schedule.run(|lo, hi| double(&inv_g, &one, lo, hi))?;
            let ii =
                schedule.run(|lo, hi| single(&|x| (f.survival(x) * inv_g(x)).sqrt(), lo, hi))?;
            vec![
                ConditionPart {
                    label: "i",
                    outcome: i,
                },
                ConditionPart {
                    label: "ii",
                    outcome: ii,
                },
            ]
        }
        Condition::Condition2 => {
            let i = schedule.run(|lo, hi| double(&inv_g, &inv_g, lo, hi))?;
            // S(x) / (1 − H(x−)) = 1 / (1 − G(x−)) for continuous F
            let ii = schedule.run(|lo, hi| single(&inv_g, lo, hi))?;
            vec![
                ConditionPart {
                    label: "i",
                    outcome: i,
                },
                ConditionPart {
                    label: "ii",
                    outcome: ii,
                },
            ]
        }
    };
    Ok(ConditionDiagnostic {
        which,
        finite: parts.iter().all(|p| p.outcome.is_finite()),
        parts,
    })
}

fn f_arc(joint: &JointModel) -> SharedModel {
    joint.survival.clone()
}

fn dyadic_breaks(start: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = start;
    while t < hi {
        out.push(t);
        t *= 2.0;
    }
    out
}

/// Survival-model mini-language: `exp:RATE`.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelSpec {
    Exponential { rate: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<SharedModel> {
        match *self {
            ModelSpec::Exponential { rate } => exponential_model(rate),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Exponential { rate } => write!(f, "exp:{rate}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |message: &str| Error::Spec {
            input: s.to_string(),
            message: message.to_string(),
        };
        let (head, arg) = s
            .split_once(':')
            .ok_or_else(|| err("expected `exp:RATE`"))?;
        match head.trim() {
            "exp" => {
                let rate: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| err("rate is not a number"))?;
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(err("rate must be positive"));
                }
                Ok(ModelSpec::Exponential { rate })
            }
            _ => Err(err("unknown model family (expected `exp`)")),
        }
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Censoring mini-language: `kg:GAMMA` or `none`.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CensorSpec {
    None,
    KoziolGreen { gamma: f64 },
}

impl CensorSpec {
    pub fn build(&self, base: SharedModel) -> Result<JointModel> {
        match *self {
            CensorSpec::None => Ok(JointModel::uncensored(base)),
            CensorSpec::KoziolGreen { gamma } => koziol_green(base, gamma),
        }
    }
}

impl fmt::Display for CensorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CensorSpec::None => write!(f, "none"),
            CensorSpec::KoziolGreen { gamma } => write!(f, "kg:{gamma}"),
        }
    }
}

impl FromStr for CensorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |message: &str| Error::Spec {
            input: s.to_string(),
            message: message.to_string(),
        };
        if s.trim() == "none" {
            return Ok(CensorSpec::None);
        }
        let (head, arg) = s
            .split_once(':')
            .ok_or_else(|| err("expected `kg:GAMMA` or `none`"))?;
        match head.trim() {
            "kg" => {
                let gamma: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| err("gamma is not a number"))?;
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(err("gamma must be non-negative"));
                }
                Ok(CensorSpec::KoziolGreen { gamma })
            }
            _ => Err(err("unknown censoring family (expected `kg` or `none`)")),
        }
    }
}

impl From<CensorSpec> for String {
    fn from(c: CensorSpec) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for CensorSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_basics() {
        let m = exponential_model(1.0).unwrap();
        assert!((m.survival(1.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((m.cumulative_hazard(2.0) - 2.0).abs() < 1e-15);
        let m2 = exponential_model(2.0).unwrap();
        assert!((m2.quantile(0.5).unwrap() - 2f64.ln() / 2.0).abs() < 1e-15);
        assert!(exponential_model(0.0).is_err());
        assert!(exponential_model(-1.0).is_err());
    }

    #[test]
    fn survival_identities_on_grid() {
        let m = exponential_model(1.7).unwrap();
        for i in 0..200 {
            let x = i as f64 * 0.05;
            assert!((m.survival(x) + m.cdf(x) - 1.0).abs() < 1e-15);
            assert!((m.cumulative_hazard(x) + m.survival(x).ln()).abs() < 1e-12);
            if x > 0.0 {
                let v = m.survival(x);
                assert!((m.inverse_survival(v).unwrap() - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn koziol_green_survivors() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.5).unwrap();
        for i in 0..100 {
            let x = i as f64 * 0.1;
            assert!((joint.observed_survivor(x) - (-1.5 * x).exp()).abs() < 1e-15);
        }
        let none = koziol_green(base.clone(), 0.0).unwrap();
        assert_eq!(none.censoring.survivor(3.0), 1.0);
        assert!(koziol_green(base, -0.1).is_err());
        assert!(joint.tau().is_infinite());
    }

    #[test]
    fn event_probability_matches_closed_form() {
        let base = exponential_model(1.0).unwrap();
        for gamma in [0.0, 0.5, 1.0, 2.0] {
            let joint = koziol_green(base.clone(), gamma).unwrap();
            let p = joint.event_probability().unwrap();
            assert!((p - 1.0 / (1.0 + gamma)).abs() < 1e-9, "gamma {gamma}: {p}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.5).unwrap();
        let a = sample_censored(&joint, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_censored(&joint, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);

        let n = 100_000;
        let s = sample_censored(&joint, n, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let p = s.n_events() as f64 / n as f64;
        let se = (2.0 / 3.0 * (1.0 / 3.0) / n as f64).sqrt();
        assert!((p - 2.0 / 3.0).abs() < 0.01);
        assert!((p - 2.0 / 3.0).abs() < 3.0 * se, "p = {p}");

        let uncensored = koziol_green(base, 0.0).unwrap();
        let s = sample_censored(&uncensored, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.n_events(), 1000);
    }

    #[test]
    fn inverse_cdf_draws_follow_the_model() {
        let base = exponential_model(1.0).unwrap();
        let joint = JointModel::uncensored(base.clone());
        let n = 100_000;
        let s = sample_censored(&joint, n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut ks: f64 = 0.0;
        for (i, t) in s.times().enumerate() {
            let f = base.cdf(t);
            ks = ks
                .max((f - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn spec_round_trip() {
        for s in ["exp:1", "exp:2.5"] {
            let m: ModelSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
            assert_eq!(m.build().unwrap().descriptor(), s);
        }
        for s in ["kg:0.5", "kg:0", "none"] {
            let c: CensorSpec = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert!("exp:-1".parse::<ModelSpec>().is_err());
        assert!("weibull:1".parse::<ModelSpec>().is_err());
        assert!("kg:-1".parse::<CensorSpec>().is_err());
        assert!("exp".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn product_kernel_condition_boundary() {
        let base = exponential_model(1.0).unwrap();
        let k = Kernel::product(0.0);
        let ok = condition_check(
            &koziol_green(base.clone(), 0.5).unwrap(),
            &k,
            Condition::Condition1,
        )
        .unwrap();
        assert!(ok.finite, "{ok:?}");
        // part i: ∫x² e^{ax} e^{-x} dx · ∫ y² e^{-y} dy = 2/(1-a)³ · 2 = 32
        match &ok.parts[0].outcome {
            TailOutcome::Finite { value, .. } => assert!((value - 32.0).abs() < 1e-6, "{value}"),
            other => panic!("{other:?}"),
        }
        let bad = condition_check(
            &koziol_green(base.clone(), 1.5).unwrap(),
            &k,
            Condition::Condition1,
        )
        .unwrap();
        assert!(!bad.finite, "{bad:?}");
        let zero = condition_check(
            &koziol_green(base, 0.5).unwrap(),
            &Kernel::Constant(0.0),
            Condition::Condition2,
        )
        .unwrap();
        assert!(zero.finite);
        for p in &zero.parts {
            assert!(matches!(p.outcome, TailOutcome::Finite { value, .. } if value == 0.0));
        }
    }
}

//! Kaplan-Meier V- and U-statistics, the MMD² statistic against a fixed
//! null law, and the population target `θ(F; τ)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, pairwise_sum, Execution};
use crate::kernels::Kernel;
use crate::models::{expect_df_with, SharedModel};
use crate::operators::{projection_phi, Projection};
use crate::quadrature::Tolerance;
use crate::survival::{diagonal_term, KaplanMeierFit};

/// Which power of `n` stabilises the statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    SqrtN,
    N,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Components {
    UStat {
        vstat: f64,
        diagonal: f64,
        pair_mass: f64,
    },
    Mmd {
        vstat: f64,
        cross_term: f64,
        null_term: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatisticResult {
    pub value: f64,
    pub n: usize,
    pub n_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling_hint: Option<Scaling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<Components>,
}

impl StatisticResult {
    fn new(fit: &KaplanMeierFit, value: f64, components: Option<Components>) -> Self {
        StatisticResult {
            value,
            n: fit.n(),
            n_events: fit.sample().n_events(),
            scaling_hint: None,
            components,
        }
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling_hint = Some(scaling);
        self
    }
}

/// `Σ_i Σ_j W_i W_j K(X_i, X_j)` over the uncensored observations.
pub fn vstat(fit: &KaplanMeierFit, kernel: &Kernel) -> Result<f64> {
    vstat_with(fit, kernel, Execution::default())
}

/// [`vstat`] with an explicit schedule. Row sums are formed sequentially and
/// reduced pairwise, so the value is identical under either schedule.
pub fn vstat_with(fit: &KaplanMeierFit, kernel: &Kernel, exec: Execution) -> Result<f64> {
    let (xs, ws): (Vec<f64>, Vec<f64>) = fit.atoms().unzip();
    let d = xs.len();
    let rows = map_indexed(exec, d, |i| {
        let xi = xs[i];
        let mut off = 0.0;
        for j in i + 1..d {
            off += ws[j] * kernel.eval(xi, xs[j]);
        }
        ws[i] * (ws[i] * kernel.eval(xi, xi) + 2.0 * off)
    });
    let total = pairwise_sum(&rows);
    if !total.is_finite() {
        return Err(first_non_finite(&xs, kernel));
    }
    Ok(total)
}

fn first_non_finite(xs: &[f64], kernel: &Kernel) -> Error {
    for (i, &x) in xs.iter().enumerate() {
        for &y in &xs[i..] {
            if !kernel.eval(x, y).is_finite() {
                return Error::NonFiniteKernel { x, y };
            }
        }
    }
    Error::NonFiniteKernel {
        x: f64::NAN,
        y: f64::NAN,
    }
}

/// `θ_U = (θ_V − Σ K(X_i,X_i) W_i²) / Σ_{i≠j} W_i W_j`.
pub fn ustat(fit: &KaplanMeierFit, kernel: &Kernel) -> Result<StatisticResult> {
    ustat_with(fit, kernel, Execution::default())
}

pub fn ustat_with(
    fit: &KaplanMeierFit,
    kernel: &Kernel,
    exec: Execution,
) -> Result<StatisticResult> {
    let pair_mass = fit.pair_mass();
    if !(pair_mass > 0.0) {
        return Err(Error::DegenerateWeightMass { pair_mass });
    }
    let v = vstat_with(fit, kernel, exec)?;
    let diagonal = diagonal_term(fit, kernel)?;
    let value = (v - diagonal) / pair_mass;
    Ok(StatisticResult::new(
        fit,
        value,
        Some(Components::UStat {
            vstat: v,
            diagonal,
            pair_mass,
        }),
    ))
}

/// `θ(F; τ) = ∫_0^τ ∫_0^τ K dF dF`.
pub fn theta_limit(model: SharedModel, kernel: &Kernel, tau: f64) -> Result<f64> {
    if let Some(v) = closed_theta(&model, kernel, tau) {
        return Ok(v);
    }
    let phi = projection_phi(model.clone(), kernel, tau)?;
    theta_from_projection(&model, &phi)
}

fn closed_theta(model: &SharedModel, kernel: &Kernel, tau: f64) -> Option<f64> {
    let full = tau >= model.support_end();
    match kernel {
        Kernel::Constant(c) => Some(c * model.cdf(tau).powi(2)),
        Kernel::OrnsteinUhlenbeck if full => model.exponential_rate().map(|r| r / (1.0 + r)),
        Kernel::Product { center } if full => {
            model.exponential_rate().map(|r| (1.0 / r - center).powi(2))
        }
        Kernel::CramerVonMises { null } if full && null.descriptor() == model.descriptor() => {
            Some(0.0)
        }
        _ => None,
    }
}

fn theta_from_projection(model: &SharedModel, phi: &Projection) -> Result<f64> {
    let mut failure = None;
    let out = expect_df_with(
        &**model,
        |y| match phi.eval(y) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        phi.tau(),
        &[],
        Tolerance::OUTER,
    );
    match failure {
        Some(e) => Err(e),
        None => out,
    }
}

/// The null-law pieces of MMD², computed once per `(kernel, null)`.
#[derive(Clone, Debug)]
pub struct MmdReference {
    kernel: Kernel,
    phi: Projection,
    theta_null: f64,
}

impl MmdReference {
    pub fn new(kernel: &Kernel, null: SharedModel) -> Result<Self> {
        if !null.is_continuous() {
            return Err(Error::ModelNotContinuous(null.descriptor()));
        }
        let phi = projection_phi(null.clone(), kernel, f64::INFINITY)?;
        let theta_null = match closed_theta(&null, kernel, f64::INFINITY) {
            Some(v) => v,
            None => theta_from_projection(&null, &phi)?,
        };
        Ok(MmdReference {
            kernel: kernel.clone(),
            phi,
            theta_null,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `θ(F₀) = ∫∫ K dF₀ dF₀`.
    pub fn theta_null(&self) -> f64 {
        self.theta_null
    }

    /// `φ₀(y) = ∫ K(x, y) dF₀(x)`.
    pub fn phi(&self, y: f64) -> Result<f64> {
        self.phi.eval(y)
    }

    pub fn mmd2(&self, fit: &KaplanMeierFit) -> Result<StatisticResult> {
        self.mmd2_with(fit, Execution::default())
    }

    /// `θ(F̂_n) − 2 Σ W_i φ₀(X_i) + θ(F₀)`.
    pub fn mmd2_with(&self, fit: &KaplanMeierFit, exec: Execution) -> Result<StatisticResult> {
        let v = vstat_with(fit, &self.kernel, exec)?;
        let mut cross = 0.0;
        for (x, w) in fit.atoms() {
            cross += w * self.phi.eval(x)?;
        }
        let value = v - 2.0 * cross + self.theta_null;
        Ok(StatisticResult::new(
            fit,
            value,
            Some(Components::Mmd {
                vstat: v,
                cross_term: cross,
                null_term: self.theta_null,
            }),
        ))
    }
}

/// `MMD(F̂_n, F₀)²`; build an [`MmdReference`] when testing many samples.
pub fn mmd2(fit: &KaplanMeierFit, kernel: &Kernel, null: SharedModel) -> Result<StatisticResult> {
    MmdReference::new(kernel, null)?.mmd2(fit)
}

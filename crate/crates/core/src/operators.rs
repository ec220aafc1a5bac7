//! The forward operator `A`, the projection `φ`, the transformed kernel
//! `K′ = A₁A₂K`, regime classification and the non-degenerate variance.
//!
//! ```text
//! (Ag)(x) = g(x) − S(x)⁻¹ ∫_x^τ g dF
//! φ(y)    = ∫_0^τ K(x, y) dF(x)
//! σ²      = ∫_0^τ S(x) / (1 − H(x−)) · (Aφ)(x)² dF(x)
//! ```
//!
//! Closed forms are registered for the Ornstein–Uhlenbeck and product
//! kernels under exponential laws and for the Cramér–von Mises kernel under
//! its own null; everything else falls back to (nested) adaptive quadrature.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{expect_df_checked, expect_df_with, tail_mean, JointModel, SharedModel};
use crate::quadrature::Tolerance;

/// `(e^{−ρd} − e^{−d}) / (1 − ρ)`, continuous at `ρ = 1`.
fn exp_difference(rate: f64, d: f64) -> f64 {
    let z = (1.0 - rate) * d;
    let rel = if z.abs() < 1e-12 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    };
    (-d).exp() * d * rel
}

/// `x ↦ (Ag)(x)` for a fixed survival law.
pub struct ForwardA<G> {
    model: SharedModel,
    g: G,
    upper: f64,
}

impl<G: Fn(f64) -> f64> ForwardA<G> {
    pub fn eval(&self, x: f64) -> Result<f64> {
        let tail = tail_mean(
            &*self.model,
            x,
            self.upper,
            |s| Ok((self.g)(s)),
            &[],
            Tolerance::OUTER,
        )?;
        Ok((self.g)(x) - tail)
    }
}

/// The forward operator applied to `g`, with tail integrals to `τ_F`.
pub fn forward_a<G: Fn(f64) -> f64>(model: SharedModel, g: G) -> ForwardA<G> {
    let upper = model.support_end();
    ForwardA { model, g, upper }
}

fn same_law(a: &SharedModel, b: &SharedModel) -> bool {
    a.descriptor() == b.descriptor()
}

#[derive(Clone, Debug)]
enum ClosedProjection {
    /// `ρ·D(y) + ρe^{−ρy}/(1+ρ)` (OU under `exp(ρ)`, `τ = ∞`)
    Ou { rate: f64 },
    /// `(y − c)·m` with `A` mapping it to the constant `−m/ρ`
    Product {
        center: f64,
        mean_factor: f64,
        rate: Option<f64>,
    },
    /// `φ ≡ c`
    Constant(f64),
}

/// The projection `φ(y) = ∫_0^τ K(x, y) dF(x)`.
#[derive(Clone, Debug)]
pub struct Projection {
    model: SharedModel,
    kernel: Kernel,
    tau: f64,
    closed: Option<ClosedProjection>,
}

impl Projection {
    pub fn eval(&self, y: f64) -> Result<f64> {
        match &self.closed {
            Some(ClosedProjection::Ou { rate }) => {
                let r = *rate;
                Ok(r * exp_difference(r, y) + r * (-r * y).exp() / (1.0 + r))
            }
            Some(ClosedProjection::Product {
                center,
                mean_factor,
                ..
            }) => Ok((y - center) * mean_factor),
            Some(ClosedProjection::Constant(c)) => Ok(*c),
            None => self.eval_quadrature(y),
        }
    }

    pub fn eval_quadrature(&self, y: f64) -> Result<f64> {
        let k = &self.kernel;
        expect_df_with(
            &*self.model,
            |x| k.eval(x, y),
            0.0,
            self.tau,
            &[y],
            Tolerance::INNER,
        )
    }

    pub fn is_closed_form(&self) -> bool {
        self.closed.is_some()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `(Aφ)(x)` with tail integrals up to `τ`.
    pub fn forward(&self, x: f64) -> Result<f64> {
        let full_tail = self.tau >= self.model.support_end();
        match &self.closed {
            Some(ClosedProjection::Product {
                mean_factor,
                rate: Some(rate),
                ..
            }) if full_tail => Ok(-mean_factor / rate),
            Some(ClosedProjection::Constant(_)) if full_tail => Ok(0.0),
            _ => {
                let tail = tail_mean(
                    &*self.model,
                    x,
                    self.tau,
                    |s| self.eval(s),
                    &[],
                    Tolerance::INNER,
                )?;
                Ok(self.eval(x)? - tail)
            }
        }
    }
}

/// Builds `φ` for `kernel` under `model`, integrating up to `tau`.
pub fn projection_phi(model: SharedModel, kernel: &Kernel, tau: f64) -> Result<Projection> {
    if !model.is_continuous() {
        return Err(Error::ModelNotContinuous(model.descriptor()));
    }
    let tau = tau.min(model.support_end());
    let full = tau.is_infinite() || model.cdf(tau) >= 1.0;
    let rate = model.exponential_rate();
    let closed = match kernel {
        Kernel::OrnsteinUhlenbeck if full => rate.map(|rate| ClosedProjection::Ou { rate }),
        Kernel::Product { center } if full => rate.map(|rate| ClosedProjection::Product {
            center: *center,
            mean_factor: 1.0 / rate - center,
            rate: Some(rate),
        }),
        Kernel::CramerVonMises { null } if full && same_law(null, &model) => {
            Some(ClosedProjection::Constant(0.0))
        }
        Kernel::Constant(c) => Some(ClosedProjection::Constant(c * model.cdf(tau))),
        _ => None,
    };
    Ok(Projection {
        model,
        kernel: kernel.clone(),
        tau,
        closed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Quadrature,
}

#[derive(Clone, Debug)]
enum ClosedKPrime {
    Ou { rate: f64 },
    Cvm { null: SharedModel },
    Constant(f64),
}

/// `K′ = A₁A₂K` for a kernel and a survival law, with `τ = τ_F`.
#[derive(Clone, Debug)]
pub struct TransformedKernel {
    kernel: Kernel,
    model: SharedModel,
    tau: f64,
    closed: Option<ClosedKPrime>,
}

impl TransformedKernel {
    pub fn provenance(&self) -> Provenance {
        if self.closed.is_some() {
            Provenance::ClosedForm
        } else {
            Provenance::Quadrature
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn model(&self) -> &SharedModel {
        &self.model
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match &self.closed {
            Some(ClosedKPrime::Ou { rate }) => {
                let r = *rate;
                let d = (x - y).abs();
                let c = 0.5 * r / (1.0 + r);
                Ok((-d).exp() * (1.0 - c) - c * (-r * d).exp() - 0.5 * r * exp_difference(r, d))
            }
            Some(ClosedKPrime::Cvm { null }) => {
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                let s_hi = null.survival(hi);
                let s_lo = null.survival(lo);
                if s_lo <= 0.0 {
                    return Err(Error::SingularSurvival { x: lo });
                }
                Ok(s_hi * (s_hi / s_lo) / 3.0)
            }
            Some(ClosedKPrime::Constant(c)) => Ok(*c),
            None => self.eval_quadrature(x, y),
        }
    }

    /// The four-term expansion of `A₁A₂K` by nested adaptive quadrature.
    pub fn eval_quadrature(&self, x: f64, y: f64) -> Result<f64> {
        let m = &*self.model;
        let k = &self.kernel;
        let inner = Tolerance::INNER;
        let outer = Tolerance::OUTER;
        let t_xy = tail_mean(m, x, self.tau, |s| Ok(k.eval(s, y)), &[y], outer)?;
        let t_yx = tail_mean(m, y, self.tau, |t| Ok(k.eval(x, t)), &[x], outer)?;
        let both = tail_mean(
            m,
            x,
            self.tau,
            |s| tail_mean(m, y, self.tau, |t| Ok(k.eval(s, t)), &[s], inner),
            &[y],
            outer,
        )?;
        Ok(k.eval(x, y) - t_xy - t_yx + both)
    }
}

/// Builds `K′` for `kernel` under `model`.
pub fn kprime(model: SharedModel, kernel: &Kernel) -> Result<TransformedKernel> {
    if !model.is_continuous() {
        return Err(Error::ModelNotContinuous(model.descriptor()));
    }
    let tau = model.support_end();
    let rate = model.exponential_rate();
    let closed = match kernel {
        Kernel::OrnsteinUhlenbeck => rate.map(|rate| ClosedKPrime::Ou { rate }),
        Kernel::Product { .. } => rate.map(|rate| ClosedKPrime::Constant(1.0 / (rate * rate))),
        Kernel::CramerVonMises { null } if same_law(null, &model) => {
            Some(ClosedKPrime::Cvm { null: null.clone() })
        }
        Kernel::Constant(_) => Some(ClosedKPrime::Constant(0.0)),
        _ => None,
    };
    Ok(TransformedKernel {
        kernel: kernel.clone(),
        model,
        tau,
        closed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NonDegenerate,
    /// `φ = 0` F-a.s.
    DegenerateZero,
    /// `φ = c ≠ 0` F-a.s.
    DegenerateConstant,
}

impl Regime {
    pub fn is_degenerate(self) -> bool {
        !matches!(self, Regime::NonDegenerate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeClassification {
    pub regime: Regime,
    pub var_phi: f64,
    pub phi_mean: f64,
}

/// Default tolerance for [`classify_regime`].
pub const REGIME_TOL: f64 = 1e-8;

/// Decides between the `√n` and `n` regimes from the moments of `φ` under
/// `F` restricted to `[0, τ]`.
///
/// `Var(φ) < tol·max(1, E φ²)` marks a degenerate kernel; it is
/// `DegenerateZero` when additionally `|E φ| < √tol·max(1, E φ²)^{1/2}`.
pub fn classify_regime(
    model: SharedModel,
    kernel: &Kernel,
    tau: f64,
    tol: f64,
) -> Result<RegimeClassification> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let phi = projection_phi(model.clone(), kernel, tau)?;
    let tau = phi.tau();
    let mass = model.cdf(tau);
    if mass <= 0.0 {
        return Err(Error::InvalidParameter(format!("F(τ) = 0 at τ = {tau}")));
    }
    let eval = |y: f64| phi.eval(y).unwrap_or(f64::NAN);
    let m1 = expect_df_with(&*model, eval, 0.0, tau, &[], Tolerance::OUTER)? / mass;
    let m2 = expect_df_with(
        &*model,
        |y| eval(y).powi(2),
        0.0,
        tau,
        &[],
        Tolerance::OUTER,
    )? / mass;
    let var_phi = (m2 - m1 * m1).max(0.0);
    let scale = m2.max(1.0);
    let regime = if var_phi < tol * scale {
        if m1.abs() < (tol * scale).sqrt() {
            Regime::DegenerateZero
        } else {
            Regime::DegenerateConstant
        }
    } else {
        Regime::NonDegenerate
    };
    Ok(RegimeClassification {
        regime,
        var_phi,
        phi_mean: m1,
    })
}

/// `σ² = ∫_0^τ (Aφ)(x)² / (1 − G(x−)) dF(x)`; the V-statistic CLT has
/// variance `4σ²`.
pub fn sigma2(joint: &JointModel, kernel: &Kernel) -> Result<f64> {
    let model = joint.survival.clone();
    let phi = projection_phi(model.clone(), kernel, joint.tau())?;
    let cens = &joint.censoring;
    expect_df_checked(
        &*model,
        |x| match phi.forward(x) {
            Ok(a) => a * a / cens.survivor_left(x),
            Err(_) => f64::NAN,
        },
        joint.tau(),
        "sigma2",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{expect_df, exponential_model, koziol_green};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> SharedModel {
        exponential_model(1.0).unwrap()
    }

    #[test]
    fn a_annihilates_constants() {
        for rate in [0.5, 1.0, 3.0] {
            let m = exponential_model(rate).unwrap();
            for c in [1.0, -2.5, 7.0] {
                let a = forward_a(m.clone(), |_| c);
                for i in 0..40 {
                    let x = i as f64 * 0.25;
                    assert!(a.eval(x).unwrap().abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn a_of_identity_is_minus_one() {
        let a = forward_a(exp1(), |x| x);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x = rng.random::<f64>() * 8.0;
            assert!((a.eval(x).unwrap() + 1.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn efron_identity() {
        // Var_F(g(T)) = ∫ (Ag)² dF for continuous F
        let m = exp1();
        let tests: [(fn(f64) -> f64, f64); 3] = [
            (|x| x, 1.0),
            (|x| x * x, 20.0),
            (|x| (-x).exp(), 1.0 / 3.0 - 0.25),
        ];
        for (g, var) in tests {
            let a = forward_a(m.clone(), g);
            let lhs = expect_df(&*m, |x| a.eval(x).unwrap().powi(2), 0.0, f64::INFINITY).unwrap();
            assert!((lhs - var).abs() <= 1e-5, "{lhs} vs {var}");
        }
    }

    #[test]
    fn projection_examples() {
        let phi = projection_phi(exp1(), &Kernel::product(0.0), f64::INFINITY).unwrap();
        for x in [0.1, 1.0, 4.0] {
            assert!((phi.eval(x).unwrap() - x).abs() < 1e-15);
            assert!((phi.eval_quadrature(x).unwrap() - x).abs() < 1e-8);
        }
        let cvm = Kernel::cvm(exp1()).unwrap();
        let phi = projection_phi(exp1(), &cvm, f64::INFINITY).unwrap();
        for x in [0.1, 1.0, 4.0] {
            assert_eq!(phi.eval(x).unwrap(), 0.0);
            assert!(phi.eval_quadrature(x).unwrap().abs() < 1e-9);
        }
        let phi = projection_phi(exp1(), &Kernel::Constant(1.0), 2.0).unwrap();
        assert!((phi.eval(0.7).unwrap() - exp1().cdf(2.0)).abs() < 1e-15);
    }

    #[test]
    fn ou_projection_closed_form_matches_quadrature() {
        for rate in [0.5, 1.0, 2.0] {
            let phi = projection_phi(
                exponential_model(rate).unwrap(),
                &Kernel::ou(),
                f64::INFINITY,
            )
            .unwrap();
            assert!(phi.is_closed_form());
            for x in [0.05, 0.7, 1.0, 3.3] {
                let (c, q) = (phi.eval(x).unwrap(), phi.eval_quadrature(x).unwrap());
                assert!((c - q).abs() < 1e-9, "rate {rate} x {x}: {c} vs {q}");
            }
        }
        let phi = projection_phi(exp1(), &Kernel::ou(), f64::INFINITY).unwrap();
        assert!((phi.eval(1.0).unwrap() - 1.5 * (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kprime_worked_examples() {
        let ou = kprime(exp1(), &Kernel::ou()).unwrap();
        assert_eq!(ou.provenance(), Provenance::ClosedForm);
        assert!((ou.eval(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(ou.eval(1.0, 2.0).unwrap().abs() < 1e-15);
        for (x, y) in [(0.3, 2.0), (4.0, 1.5)] {
            let d = f64::abs(x - y);
            let expect = 0.5 * (1.0 - d) * (-d).exp();
            assert!((ou.eval(x, y).unwrap() - expect).abs() < 1e-14);
        }

        let cvm = kprime(exp1(), &Kernel::cvm(exp1()).unwrap()).unwrap();
        assert!((cvm.eval(0.0, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let prod = kprime(exp1(), &Kernel::product(0.0)).unwrap();
        assert_eq!(prod.eval(0.4, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn closed_kprime_matches_nested_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let kernels = [
            Kernel::ou(),
            Kernel::cvm(exp1()).unwrap(),
            Kernel::product(0.0),
            Kernel::product(1.0),
        ];
        for k in &kernels {
            let kp = kprime(exp1(), k).unwrap();
            for _ in 0..10 {
                let x = rng.random::<f64>() * 4.0;
                let y = rng.random::<f64>() * 4.0;
                let c = kp.eval(x, y).unwrap();
                let q = kp.eval_quadrature(x, y).unwrap();
                assert!((c - q).abs() <= 1e-6, "{k:?} ({x}, {y}): {c} vs {q}");
            }
        }
        // non-unit rate for the OU closed form
        let m = exponential_model(2.5).unwrap();
        let kp = kprime(m, &Kernel::ou()).unwrap();
        for (x, y) in [(0.1, 0.1), (0.2, 1.4), (2.0, 0.5)] {
            let c = kp.eval(x, y).unwrap();
            let q = kp.eval_quadrature(x, y).unwrap();
            assert!((c - q).abs() <= 1e-6, "({x}, {y}): {c} vs {q}");
        }
    }

    #[test]
    fn quadrature_kprime_is_symmetric() {
        let kp = kprime(exp1(), &Kernel::gaussian(1.0).unwrap()).unwrap();
        assert_eq!(kp.provenance(), Provenance::Quadrature);
        for (x, y) in [(0.2, 1.7), (2.5, 0.4)] {
            let a = kp.eval(x, y).unwrap();
            let b = kp.eval(y, x).unwrap();
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn regimes() {
        let cvm = Kernel::cvm(exp1()).unwrap();
        let r = classify_regime(exp1(), &cvm, f64::INFINITY, REGIME_TOL).unwrap();
        assert_eq!(r.regime, Regime::DegenerateZero);
        let r = classify_regime(exp1(), &Kernel::product(0.0), f64::INFINITY, REGIME_TOL).unwrap();
        assert_eq!(r.regime, Regime::NonDegenerate);
        assert!((r.var_phi - 1.0).abs() < 1e-8);
        let r = classify_regime(exp1(), &Kernel::product(1.0), f64::INFINITY, REGIME_TOL).unwrap();
        assert_eq!(r.regime, Regime::DegenerateZero);
        let r = classify_regime(exp1(), &Kernel::Constant(2.0), f64::INFINITY, REGIME_TOL).unwrap();
        assert_eq!(r.regime, Regime::DegenerateConstant);
        // a kernel without closed forms goes through quadrature
        let k = Kernel::custom("cvm-q", Default::default(), {
            let m = exp1();
            move |x, y| crate::kernels::cvm_by_quadrature(&m, x, y).unwrap()
        });
        let r = classify_regime(exp1(), &k, f64::INFINITY, REGIME_TOL).unwrap();
        assert_eq!(r.regime, Regime::DegenerateZero, "{r:?}");
    }

    #[test]
    fn sigma2_examples() {
        let base = exp1();
        let k = Kernel::product(0.0);
        let s = sigma2(&koziol_green(base.clone(), 0.5).unwrap(), &k).unwrap();
        assert!((s - 2.0).abs() < 1e-7, "{s}");
        let s = sigma2(&koziol_green(base.clone(), 0.0).unwrap(), &k).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
        let s = sigma2(
            &koziol_green(base.clone(), 0.5).unwrap(),
            &Kernel::Constant(3.0),
        )
        .unwrap();
        assert_eq!(s, 0.0);
        let err = sigma2(&koziol_green(base, 1.5).unwrap(), &k).unwrap_err();
        assert!(matches!(err, Error::DivergentIntegral { .. }), "{err:?}");
    }

    #[test]
    fn sigma2_quadrature_path_for_ou() {
        // Aφ for the OU kernel is computed by quadrature over the closed-form φ.
        // Cross-check against Var(φ(T)) in the uncensored case (Efron identity).
        let base = exp1();
        let s = sigma2(&JointModel::uncensored(base.clone()), &Kernel::ou()).unwrap();
        let phi = projection_phi(base.clone(), &Kernel::ou(), f64::INFINITY).unwrap();
        let m1 = expect_df(&*base, |x| phi.eval(x).unwrap(), 0.0, f64::INFINITY).unwrap();
        let m2 = expect_df(&*base, |x| phi.eval(x).unwrap().powi(2), 0.0, f64::INFINITY).unwrap();
        assert!((s - (m2 - m1 * m1)).abs() < 1e-8, "{s} vs {}", m2 - m1 * m1);
    }
}

//! Symmetric kernels on `(0, ∞)²`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{ModelSpec, SharedModel};
use crate::quadrature::{integrate, Tolerance};

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KernelFlags {
    pub positive_definite: bool,
    pub bounded: bool,
}

/// A symmetric bivariate kernel.
///
/// The named variants carry enough structure for the operators module to
/// pick closed-form projections and transformed kernels; `Custom` kernels
/// are handled by quadrature.
#[derive(Clone)]
pub enum Kernel {
    /// `e^{−|x−y|}`
    OrnsteinUhlenbeck,
    /// `e^{−(x−y)²/(2h²)}`
    Gaussian {
        bandwidth: f64,
    },
    /// `(x−c)(y−c)`
    Product {
        center: f64,
    },
    /// Cramér–von Mises kernel of a continuous null law `F₀`:
    /// `S₀(max(x,y)) + (F₀(x)² + F₀(y)²)/2 − 2/3`.
    CramerVonMises {
        null: SharedModel,
    },
    Constant(f64),
    Custom {
        name: String,
        f: KernelFn,
        flags: KernelFlags,
    },
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Kernel {
    pub fn ou() -> Self {
        Kernel::OrnsteinUhlenbeck
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Kernel::Gaussian { bandwidth })
    }

    pub fn product(center: f64) -> Self {
        Kernel::Product { center }
    }

    pub fn cvm(null: SharedModel) -> Result<Self> {
        if !null.is_continuous() {
            return Err(Error::ModelNotContinuous(null.descriptor()));
        }
        Ok(Kernel::CramerVonMises { null })
    }

    pub fn custom<F>(name: impl Into<String>, flags: KernelFlags, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Kernel::Custom {
            name: name.into(),
            f: Arc::new(f),
            flags,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::OrnsteinUhlenbeck => (-(x - y).abs()).exp(),
            Kernel::Gaussian { bandwidth } => {
                let d = (x - y) / bandwidth;
                (-0.5 * d * d).exp()
            }
            Kernel::Product { center } => (x - center) * (y - center),
            Kernel::CramerVonMises { null } => {
                let (fx, fy) = (null.cdf(x), null.cdf(y));
                null.survival(x.max(y)) + 0.5 * (fx * fx + fy * fy) - 2.0 / 3.0
            }
            Kernel::Constant(c) => *c,
            Kernel::Custom { f, .. } => f(x, y),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Kernel::OrnsteinUhlenbeck => "ou".into(),
            Kernel::Gaussian { bandwidth } => format!("gauss:{bandwidth}"),
            Kernel::Product { center } => format!("prod:{center}"),
            Kernel::CramerVonMises { null } => format!("cvm[{}]", null.descriptor()),
            Kernel::Constant(c) => format!("const:{c}"),
            Kernel::Custom { name, .. } => name.clone(),
        }
    }

    pub fn flags(&self) -> KernelFlags {
        match self {
            Kernel::OrnsteinUhlenbeck | Kernel::Gaussian { .. } => KernelFlags {
                positive_definite: true,
                bounded: true,
            },
            // rank one, so only semi-definite
            Kernel::Product { .. } => KernelFlags {
                positive_definite: false,
                bounded: false,
            },
            // a covariance kernel
            Kernel::CramerVonMises { .. } => KernelFlags {
                positive_definite: true,
                bounded: true,
            },
            Kernel::Constant(_) => KernelFlags {
                positive_definite: false,
                bounded: true,
            },
            Kernel::Custom { flags, .. } => *flags,
        }
    }
}

/// Ornstein–Uhlenbeck kernel `e^{−|x−y|}`.
pub fn ou_kernel() -> Kernel {
    Kernel::ou()
}

/// `(x − center)(y − center)`.
pub fn product_kernel(center: f64) -> Kernel {
    Kernel::product(center)
}

pub fn gaussian_kernel(bandwidth: f64) -> Result<Kernel> {
    Kernel::gaussian(bandwidth)
}

/// Cramér–von Mises kernel for the continuous null law `null_model`.
pub fn cvm_kernel(null_model: SharedModel) -> Result<Kernel> {
    Kernel::cvm(null_model)
}

/// Evaluates the Cramér–von Mises kernel from its defining integral
/// `∫ (1{x≤t} − F₀(t))(1{y≤t} − F₀(t)) dF₀(t)`, in the coordinate `u = F₀(t)`.
pub fn cvm_by_quadrature(null: &SharedModel, x: f64, y: f64) -> Result<f64> {
    if !null.is_continuous() {
        return Err(Error::ModelNotContinuous(null.descriptor()));
    }
    let (ux, uy) = (null.cdf(x), null.cdf(y));
    let ind = |a: f64, u: f64| if u >= a { 1.0 } else { 0.0 };
    integrate(
        |u| (ind(ux, u) - u) * (ind(uy, u) - u),
        0.0,
        1.0,
        &[ux, uy],
        Tolerance::new(1e-14, 1e-12),
    )
}

/// Kernel mini-language for the CLI: `ou`, `gauss:BW`, `prod:CENTER`, `cvm`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum KernelSpec {
    Ou,
    Gaussian { bandwidth: f64 },
    Product { center: f64 },
    Cvm,
}

impl KernelSpec {
    /// `cvm` binds to `null`, which must then be given.
    pub fn build(&self, null: Option<&ModelSpec>) -> Result<Kernel> {
        match *self {
            KernelSpec::Ou => Ok(Kernel::ou()),
            KernelSpec::Gaussian { bandwidth } => Kernel::gaussian(bandwidth),
            KernelSpec::Product { center } => Ok(Kernel::product(center)),
            KernelSpec::Cvm => {
                let null = null.ok_or_else(|| {
                    Error::InvalidParameter("the cvm kernel needs a null model".into())
                })?;
                Kernel::cvm(null.build()?)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Ou => write!(f, "ou"),
            KernelSpec::Gaussian { bandwidth } => write!(f, "gauss:{bandwidth}"),
            KernelSpec::Product { center } => write!(f, "prod:{center}"),
            KernelSpec::Cvm => write!(f, "cvm"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |message: &str| Error::Spec {
            input: s.to_string(),
            message: message.to_string(),
        };
        let num = |a: &str| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| err("argument is not a number"))
        };
        match s.trim().split_once(':') {
            None => match s.trim() {
                "ou" => Ok(KernelSpec::Ou),
                "cvm" => Ok(KernelSpec::Cvm),
                _ => Err(err(
                    "expected one of `ou`, `gauss:BW`, `prod:CENTER`, `cvm`",
                )),
            },
            Some(("gauss", a)) => {
                let bandwidth = num(a)?;
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(err("bandwidth must be positive"));
                }
                Ok(KernelSpec::Gaussian { bandwidth })
            }
            Some(("prod", a)) => {
                let center = num(a)?;
                if !center.is_finite() {
                    return Err(err("center must be finite"));
                }
                Ok(KernelSpec::Product { center })
            }
            Some(_) => Err(err(
                "expected one of `ou`, `gauss:BW`, `prod:CENTER`, `cvm`",
            )),
        }
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

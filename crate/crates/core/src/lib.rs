//! Kaplan-Meier V- and U-statistics for right-censored data and their
//! asymptotic null distributions.
//!
//! Parameter checks are written as `!(x > 0.0)` on purpose so that NaN fails them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod nulldist;
pub mod operators;
pub mod quadrature;
pub mod statistics;
pub mod survival;

pub use error::{Error, Result};
pub use harness::{Experiment, ExperimentConfig, ExperimentResult};
pub use kernels::{Kernel, KernelSpec};
pub use models::{CensorSpec, JointModel, ModelSpec, SharedModel};
pub use nulldist::{LimitDistribution, Nystrom};
pub use operators::{Regime, RegimeClassification, TransformedKernel};
pub use statistics::{MmdReference, StatisticResult};
pub use survival::{CensoredObservation, CensoredSample, KaplanMeierFit};

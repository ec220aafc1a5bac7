//! Right-censored samples and the Kaplan-Meier estimator.
//!
//! Observations are kept as order statistics with the tie rule that, at
//! equal times, uncensored observations come before censored ones. The
//! Kaplan-Meier weights are computed directly from the product-limit
//! weight formula
//!
//! ```text
//! W_i = (Δ_i / n) · Π_{j<i} (1 + (1 - Δ_j) / (n - j))
//! ```
//!
//! in a single left-to-right pass, so no survival-curve ratio is ever
//! formed and a curve that drops to zero causes no 0/0.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// One observed pair `(X, Δ)`: `X = min(T, C)` and `Δ = 1{T ≤ C}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoredObservation {
    pub time: f64,
    /// `true` when the survival time was observed (not censored).
    pub event: bool,
}

impl CensoredObservation {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }

    pub fn event(time: f64) -> Self {
        Self::new(time, true)
    }

    pub fn censored(time: f64) -> Self {
        Self::new(time, false)
    }
}

impl From<(f64, bool)> for CensoredObservation {
    fn from((time, event): (f64, bool)) -> Self {
        Self { time, event }
    }
}

/// Observations sorted by time with uncensored entries first among ties.
///
/// Ties within the uncensored group, and within the censored group, keep
/// their input order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensoredSample {
    observations: Vec<CensoredObservation>,
}

impl CensoredSample {
    pub fn new(raw: Vec<CensoredObservation>) -> Result<Self> {
        sort_censored(raw)
    }

    pub fn observations(&self) -> &[CensoredObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Always false: a sample holds at least one observation.
    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.observations.iter().filter(|o| o.event).count()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.time)
    }

    /// Largest observed time `τ_n`.
    pub fn max_time(&self) -> f64 {
        self.observations.last().map_or(0.0, |o| o.time)
    }

    /// Number of observations with time `≥ t`.
    pub fn at_risk(&self, t: f64) -> usize {
        let below = self.observations.partition_point(|o| o.time < t);
        self.observations.len() - below
    }
}

/// Validates and orders raw observations.
pub fn sort_censored(mut raw: Vec<CensoredObservation>) -> Result<CensoredSample> {
    if raw.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some((index, o)) = raw
        .iter()
        .enumerate()
        .find(|(_, o)| !(o.time > 0.0 && o.time.is_finite()))
    {
        return Err(Error::NonPositiveTime {
            index,
            time: o.time,
        });
    }
    // `sort_by` is stable, which gives the documented intra-group order.
    raw.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.event.cmp(&a.event)));
    Ok(CensoredSample { observations: raw })
}

/// Count of observations with time `≥ t`.
pub fn at_risk(sample: &CensoredSample, t: f64) -> usize {
    sample.at_risk(t)
}

/// The Kaplan-Meier estimator `F̂_n` represented by its jump weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KaplanMeierFit {
    sample: CensoredSample,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl KaplanMeierFit {
    pub fn new(sample: CensoredSample) -> Self {
        km_fit(sample)
    }

    pub fn sample(&self) -> &CensoredSample {
        &self.sample
    }

    /// Weights aligned with the order statistics; zero for censored points.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.sample.len()
    }

    pub fn tau_n(&self) -> f64 {
        self.sample.max_time()
    }

    /// `ΣW_i = F̂_n(τ_n)`.
    pub fn total_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `Σ_{i≠j} W_i W_j = (ΣW)² − ΣW²`.
    pub fn pair_mass(&self) -> f64 {
        let total = self.total_mass();
        let squares: f64 = self.weights.iter().map(|w| w * w).sum();
        total * total - squares
    }

    /// `F̂_n(t)`, right-continuous.
    pub fn cdf(&self, t: f64) -> f64 {
        let idx = self.sample.observations.partition_point(|o| o.time <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// `Ŝ_n(t) = 1 − F̂_n(t)`.
    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.cdf(t)
    }

    /// `(time, weight)` for every observation with a non-zero weight.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.sample
            .observations
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(o, &w)| (o.time, w))
    }
}

/// Computes the Kaplan-Meier weights of a sorted sample.
pub fn km_fit(sample: CensoredSample) -> KaplanMeierFit {
    let n = sample.len();
    let nf = n as f64;
    let mut weights = Vec::with_capacity(n);
    let mut cumulative = Vec::with_capacity(n);
    let mut product = 1.0;
    let mut acc = 0.0;
    for (i, o) in sample.observations.iter().enumerate() {
        let w = if o.event { product / nf } else { 0.0 };
        weights.push(w);
        acc += w;
        cumulative.push(acc);
        // factor for j = i + 1 (1-based), used by every later index
        if !o.event && i + 1 < n {
            product *= 1.0 + 1.0 / (n - (i + 1)) as f64;
        }
    }
    KaplanMeierFit {
        sample,
        weights,
        cumulative,
    }
}

/// Evaluates `F̂_n(t)`.
pub fn km_eval(fit: &KaplanMeierFit, t: f64) -> f64 {
    fit.cdf(t)
}

/// `Σ_i K(X_i, X_i) W_i²`; multiply by `n` for the diagonal limit.
pub fn diagonal_term(fit: &KaplanMeierFit, kernel: &Kernel) -> Result<f64> {
    let mut acc = 0.0;
    for (x, w) in fit.atoms() {
        let k = kernel.eval(x, x);
        if !k.is_finite() {
            return Err(Error::NonFiniteKernel { x, y: x });
        }
        acc += k * w * w;
    }
    Ok(acc)
}

/// Reads a `time,event` CSV (header required, event in {0, 1}).
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<CensoredObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = headers.iter().collect();
    if names != ["time", "event"] {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header `time,event`, found `{}`", names.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Csv {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let time: f64 = record[0].parse().map_err(|_| Error::Csv {
            line,
            message: format!("invalid time `{}`", &record[0]),
        })?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::Csv {
                line,
                message: format!("time must be positive and finite, found {time}"),
            });
        }
        let event = match &record[1] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Csv {
                    line,
                    message: format!("event must be 0 or 1, found `{other}`"),
                })
            }
        };
        out.push(CensoredObservation { time, event });
    }
    Ok(out)
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Vec<CensoredObservation>> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

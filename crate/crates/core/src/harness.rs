//! Seeded Monte Carlo experiments: the Cramér–von Mises and MMD degenerate
//! limits and the non-degenerate CLT, with ECDF export and a comparison
//! against the asymptotic reference.
//!
//! Replication `r` at sample size `n` draws from stream `(n << 32) | r` of a
//! ChaCha8 generator keyed by the master seed, so outputs do not depend on
//! how replications are scheduled.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::kernels::{Kernel, KernelSpec};
use crate::models::{koziol_green, sample_censored, JointModel, ModelSpec, SharedModel};
use crate::nulldist::{asymptotic_mean, asymptotic_variance};
use crate::operators::{classify_regime, kprime, sigma2, RegimeClassification, REGIME_TOL};
use crate::statistics::{theta_limit, vstat_with, MmdReference};
use crate::survival::km_fit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// `n·θ(F̂_n)` with the Cramér–von Mises kernel of the null.
    Cvm,
    /// `n·MMD(F̂_n, F₀)²` with the Ornstein–Uhlenbeck kernel.
    Mmd,
    /// `√n·(θ(F̂_n) − θ(F; τ))` with `K(x, y) = xy`.
    Clt,
}

impl Experiment {
    fn default_kernel(self) -> KernelSpec {
        match self {
            Experiment::Cvm => KernelSpec::Cvm,
            Experiment::Mmd => KernelSpec::Ou,
            Experiment::Clt => KernelSpec::Product { center: 0.0 },
        }
    }

    fn degenerate(self) -> bool {
        !matches!(self, Experiment::Clt)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Cvm => "cvm",
            Experiment::Mmd => "mmd",
            Experiment::Clt => "clt",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cvm" | "cvm_fig1" => Ok(Experiment::Cvm),
            "mmd" | "mmd_fig2" => Ok(Experiment::Mmd),
            "clt" | "clt_nondegenerate" => Ok(Experiment::Clt),
            _ => Err(Error::Spec {
                input: s.to_string(),
                message: "expected one of `cvm`, `mmd`, `clt`".into(),
            }),
        }
    }
}

/// Everything that determines an experiment's output. Worker counts are
/// deliberately absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelSpec,
    /// Koziol–Green exponent (`a` in the CLT experiment).
    pub gamma: f64,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    /// ECDF evaluation points; defaults to 101 points spanning the values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    pub regime_tol: f64,
}

impl ExperimentConfig {
    /// Desk-scale defaults: `n = 1000`, 500 replications.
    pub fn new(experiment: Experiment, gamma: f64) -> Self {
        ExperimentConfig {
            experiment,
            model: ModelSpec::Exponential { rate: 1.0 },
            gamma,
            sizes: vec![1000],
            reps: 500,
            seed: 1,
            kernel: None,
            grid: None,
            regime_tol: REGIME_TOL,
        }
    }

    /// The sample sizes and replication count used for the published
    /// figures: 1000 replications, `n = 3000` (with smaller `n` alongside
    /// for the ECDF comparison).
    pub fn full_scale(mut self) -> Self {
        self.reps = 1000;
        self.sizes = match self.experiment {
            Experiment::Cvm => vec![500, 1000, 3000],
            Experiment::Mmd | Experiment::Clt => vec![3000],
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "sample sizes must be positive".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(self.regime_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "regime tolerance must be positive".into(),
            ));
        }
        if let Some(grid) = &self.grid {
            check_sorted(grid)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Asymptotic mean and variance of the scaled statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Reference {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Standard error of the mean.
    pub std_error: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let variance = if values.len() > 1 {
            m2 / (n - 1.0)
        } else {
            0.0
        };
        let pop = m2 / n;
        let skewness = if pop > 0.0 { m3 / pop.powf(1.5) } else { 0.0 };
        Summary {
            mean,
            variance,
            skewness,
            std_error: (variance / n).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeResult {
    pub n: usize,
    #[serde(skip)]
    pub values: Vec<f64>,
    pub summary: Summary,
    #[serde(skip)]
    pub ecdf: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub regime: RegimeClassification,
    pub reference: Option<Reference>,
    /// Why the reference is missing, e.g. a divergent integral.
    pub reference_note: Option<String>,
    pub sizes: Vec<SizeResult>,
    #[serde(skip)]
    pub grid: Vec<f64>,
}

fn rep_rng(seed: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | rep as u64);
    rng
}

enum Statistic {
    Scaled(Kernel),
    Mmd(MmdReference),
    Centered { kernel: Kernel, theta: f64 },
}

impl Statistic {
    fn scaled(&self, joint: &JointModel, n: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let fit = km_fit(sample_censored(joint, n, rng)?);
        let nf = n as f64;
        let seq = Execution::Sequential;
        Ok(match self {
            Statistic::Scaled(k) => nf * vstat_with(&fit, k, seq)?,
            Statistic::Mmd(r) => nf * r.mmd2_with(&fit, seq)?.value,
            Statistic::Centered { kernel, theta } => {
                nf.sqrt() * (vstat_with(&fit, kernel, seq)? - theta)
            }
        })
    }
}

/// The kernel `K(x,y) − φ₀(x) − φ₀(y) + θ(F₀)` whose V-statistic is MMD².
fn centered_kernel(reference: &MmdReference) -> Kernel {
    let r = Arc::new(reference.clone());
    let name = format!("centered[{}]", reference.kernel().name());
    Kernel::custom(name, Default::default(), move |x, y| {
        match (r.phi(x), r.phi(y)) {
            (Ok(px), Ok(py)) => r.kernel().eval(x, y) - px - py + r.theta_null(),
            _ => f64::NAN,
        }
    })
}

fn reference_for(
    experiment: Experiment,
    joint: &JointModel,
    model: &SharedModel,
    kernel: &Kernel,
) -> Result<Reference> {
    if experiment.degenerate() {
        let kp = kprime(model.clone(), kernel)?;
        Ok(Reference {
            mean: asymptotic_mean(joint, &kp)?,
            variance: asymptotic_variance(joint, &kp)?,
        })
    } else {
        Ok(Reference {
            mean: 0.0,
            variance: 4.0 * sigma2(joint, kernel)?,
        })
    }
}

/// Runs every replication of `config` and aggregates the results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, Execution::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    config.validate()?;
    let model = config.model.build()?;
    let joint = koziol_green(model.clone(), config.gamma)?;
    let spec = config
        .kernel
        .clone()
        .unwrap_or(config.experiment.default_kernel());
    let kernel = spec.build(Some(&config.model))?;

    let (statistic, regime) = match config.experiment {
        Experiment::Mmd => {
            let r = MmdReference::new(&kernel, model.clone())?;
            let regime = classify_regime(
                model.clone(),
                &centered_kernel(&r),
                joint.tau(),
                config.regime_tol,
            )?;
            (Statistic::Mmd(r), regime)
        }
        Experiment::Cvm => {
            let regime = classify_regime(model.clone(), &kernel, joint.tau(), config.regime_tol)?;
            (Statistic::Scaled(kernel.clone()), regime)
        }
        Experiment::Clt => {
            let regime = classify_regime(model.clone(), &kernel, joint.tau(), config.regime_tol)?;
            let theta = theta_limit(model.clone(), &kernel, joint.tau())?;
            (
                Statistic::Centered {
                    kernel: kernel.clone(),
                    theta,
                },
                regime,
            )
        }
    };
    if regime.regime.is_degenerate() != config.experiment.degenerate() {
        let expected = if config.experiment.degenerate() {
            "degenerate"
        } else {
            "non_degenerate"
        };
        return Err(Error::RegimeMismatch {
            expected: expected.into(),
            found: format!("{:?}", regime.regime),
        });
    }

    let (reference, reference_note) =
        match reference_for(config.experiment, &joint, &model, &kernel) {
            Ok(r) => (Some(r), None),
            Err(e) if e.is_numerical() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };

    let mut sizes = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        let values = try_map_indexed(exec, config.reps, |rep| {
            statistic.scaled(&joint, n, &mut rep_rng(config.seed, n, rep))
        })?;
        let summary = Summary::of(&values);
        sizes.push(SizeResult {
            n,
            values,
            summary,
            ecdf: Vec::new(),
        });
    }
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => default_grid(sizes.iter().flat_map(|s| s.values.iter().copied())),
    };
    for s in &mut sizes {
        s.ecdf = ecdf_export(&s.values, &grid)?;
    }
    Ok(ExperimentResult {
        config: config.clone(),
        regime,
        reference,
        reference_note,
        sizes,
        grid,
    })
}

fn default_grid(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !(lo.is_finite() && hi.is_finite()) {
        return Vec::new();
    }
    if lo == hi {
        return vec![lo];
    }
    (0..=100)
        .map(|k| lo + (hi - lo) * k as f64 / 100.0)
        .collect()
}

fn check_sorted(grid: &[f64]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) || grid.iter().any(|g| g.is_nan()) {
        return Err(Error::UnsortedGrid);
    }
    Ok(())
}

/// `(g, #{v ≤ g} / len)` for every grid point.
pub fn ecdf_export(values: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_sorted(grid)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&g| {
            let count = sorted.partition_point(|&v| v <= g);
            (g, if n > 0.0 { count as f64 / n } else { 0.0 })
        })
        .collect())
}

/// Two-sample Kolmogorov distance `sup_t |F_a(t) − F_b(t)|`.
pub fn kolmogorov_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeComparison {
    pub n: usize,
    /// `(μ̂ − μ) / SE(μ̂)`.
    pub z_score: f64,
    /// `σ̂² / σ²`.
    pub variance_ratio: f64,
    pub empirical_interval: [f64; 2],
    pub asymptotic_interval: [f64; 2],
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub sizes: Vec<SizeComparison>,
    /// False when the reference is missing or the distribution drifts with `n`.
    pub converging: bool,
    pub notes: Vec<String>,
}

/// `|z|` beyond which a size is flagged as far from the reference.
pub const Z_FLAG: f64 = 3.0;

/// Compares each sample size with the asymptotic reference. Disagreement is
/// reported through flags and notes, never as an error.
pub fn compare_asymptotics(result: &ExperimentResult) -> Comparison {
    let mut notes = Vec::new();
    let mut converging = true;
    let mut sizes = Vec::new();
    if let Some(r) = result.reference {
        let sd = r.variance.max(0.0).sqrt();
        for s in &result.sizes {
            let Summary {
                mean,
                variance,
                std_error,
                ..
            } = s.summary;
            let z_score = if std_error > 0.0 {
                (mean - r.mean) / std_error
            } else if mean == r.mean {
                0.0
            } else {
                f64::INFINITY.copysign(mean - r.mean)
            };
            let variance_ratio = if r.variance > 0.0 {
                variance / r.variance
            } else {
                f64::NAN
            };
            let mut flags = Vec::new();
            if z_score.abs() > Z_FLAG {
                flags.push("mean_far_from_limit".to_string());
            }
            if !(0.5..=2.0).contains(&variance_ratio) {
                flags.push("variance_far_from_limit".to_string());
            }
            let sd_hat = variance.sqrt();
            sizes.push(SizeComparison {
                n: s.n,
                z_score,
                variance_ratio,
                empirical_interval: [mean - sd_hat, mean + sd_hat],
                asymptotic_interval: [r.mean - sd, r.mean + sd],
                flags,
            });
        }
        if sizes.iter().any(|s| !s.flags.is_empty()) {
            notes.push("empirical moments disagree with the limit law at some sample sizes".into());
            converging = false;
        }
    } else {
        converging = false;
        notes.push(format!(
            "no asymptotic reference: {}",
            result.reference_note.as_deref().unwrap_or("unavailable")
        ));
    }
    if drifts(&result.sizes) {
        converging = false;
        notes.push("the distribution shifts steadily as n grows, suggesting divergence".into());
    }
    Comparison {
        sizes,
        converging,
        notes,
    }
}

/// Means moving in one direction across all sizes, each step by more than
/// two combined standard errors.
fn drifts(sizes: &[SizeResult]) -> bool {
    if sizes.len() < 2 {
        return false;
    }
    let steps: Vec<f64> = sizes
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].summary, w[1].summary);
            (b.mean - a.mean) / (a.std_error.hypot(b.std_error)).max(f64::MIN_POSITIVE)
        })
        .collect();
    steps.iter().all(|&z| z > 2.0) || steps.iter().all(|&z| z < -2.0)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    version: &'static str,
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    result: &'a ExperimentResult,
    comparison: Comparison,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// The per-replication table `n,replication,value`.
pub fn values_csv(result: &ExperimentResult) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["n", "replication", "value"])
        .map_err(csv_err)?;
    for s in &result.sizes {
        for (rep, v) in s.values.iter().enumerate() {
            w.write_record([s.n.to_string(), rep.to_string(), v.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Writes `values.csv`, `ecdf.csv` and `summary.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("values.csv"), values_csv(result)?)?;

    let mut w = csv_writer(&dir.join("ecdf.csv"))?;
    w.write_record(["n", "x", "ecdf"]).map_err(csv_err)?;
    for s in &result.sizes {
        for (x, p) in &s.ecdf {
            w.write_record([s.n.to_string(), x.to_string(), p.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let summary = SummaryFile {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: result.config.hash(),
        seed: result.config.seed,
        result,
        comparison: compare_asymptotics(result),
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

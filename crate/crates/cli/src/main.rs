use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kmstat_core::exec::with_workers;
use kmstat_core::harness::{
    compare_asymptotics, run_experiment, write_outputs, Experiment, ExperimentConfig,
};
use kmstat_core::models::{condition_check, CensorSpec, Condition, ModelSpec};
use kmstat_core::nulldist::{upper_tail, ustat_limit_adjust, LimitDistribution, Nystrom};
use kmstat_core::operators::{classify_regime, kprime, sigma2, Regime, REGIME_TOL};
use kmstat_core::statistics::{ustat, vstat, MmdReference, Scaling, StatisticResult};
use kmstat_core::survival::{km_fit, read_csv_path, sort_censored, KaplanMeierFit};
use kmstat_core::{Error, Kernel, KernelSpec, Result};

#[derive(Parser)]
#[command(
    name = "kmstat",
    version,
    about = "Kaplan-Meier V/U-statistics for right-censored data"
)]
struct Cli {
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kaplan-Meier V-statistic of a CSV sample.
    Vstat(StatArgs),
    /// Kaplan-Meier U-statistic of a CSV sample.
    Ustat(StatArgs),
    /// MMD² between the Kaplan-Meier estimator and a null law.
    Mmd(StatArgs),
    /// Regime, variance and integrability diagnostics for a kernel and model.
    Analyze(AnalyzeArgs),
    /// Degenerate limit law: mean, variances and Nyström eigenvalues.
    Nulldist(NulldistArgs),
    /// Seeded Monte Carlo experiment; writes values.csv, ecdf.csv, summary.json.
    Simulate(SimulateArgs),
    /// Goodness-of-fit test of a censored sample against a null law.
    Test(TestArgs),
}

#[derive(Args)]
struct StatArgs {
    #[arg(long)]
    input: PathBuf,
    /// `ou`, `gauss:BW`, `prod:CENTER` or `cvm` (the latter needs --null).
    #[arg(long, default_value = "ou")]
    kernel: KernelSpec,
    /// Null law, `exp:RATE`; also selects the scaling hint.
    #[arg(long)]
    null: Option<ModelSpec>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "exp:1")]
    model: ModelSpec,
    #[arg(long, default_value = "kg:0")]
    censor: CensorSpec,
    #[arg(long, default_value = "ou")]
    kernel: KernelSpec,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Relative tolerance on Var(φ) for calling a kernel degenerate.
    #[arg(long, default_value_t = REGIME_TOL)]
    regime_tol: f64,
}

#[derive(Args)]
struct NulldistArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    trunc: usize,
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Report the U-statistic limit instead of the V-statistic one.
    #[arg(long)]
    ustat: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    experiment: Experiment,
    #[arg(long, default_value = "exp:1")]
    model: ModelSpec,
    /// Koziol–Green exponent (`a` for the CLT experiment).
    #[arg(long)]
    gamma: f64,
    /// Sample sizes, comma separated.
    #[arg(long = "n", value_delimiter = ',', default_value = "1000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the experiment's kernel.
    #[arg(long)]
    kernel: Option<KernelSpec>,
    /// ECDF grid, comma separated and sorted.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = REGIME_TOL)]
    regime_tol: f64,
    /// Use the published settings (1000 replications, n up to 3000).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    Cvm,
    Mmd,
}

#[derive(Args)]
struct TestArgs {
    kind: TestKind,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    null: ModelSpec,
    #[arg(long, default_value = "kg:0")]
    censor: CensorSpec,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo draws from the limit law.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 100)]
    trunc: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn load_fit(path: &PathBuf) -> Result<KaplanMeierFit> {
    Ok(km_fit(sort_censored(read_csv_path(path)?)?))
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serialisable output")
}

fn scaling_for(null: &ModelSpec, kernel: &Kernel) -> Result<Scaling> {
    let c = classify_regime(null.build()?, kernel, f64::INFINITY, REGIME_TOL)?;
    Ok(if c.regime.is_degenerate() {
        Scaling::N
    } else {
        Scaling::SqrtN
    })
}

fn stat_output(r: StatisticResult) -> Value {
    let mut v = to_json(&r);
    if v.get("components").is_none() {
        v["components"] = Value::Null;
    }
    v
}

fn run_stat(cmd: &str, args: &StatArgs) -> Result<Value> {
    let fit = load_fit(&args.input)?;
    let kernel = args.kernel.build(args.null.as_ref())?;
    let result = match cmd {
        "vstat" => {
            let value = vstat(&fit, &kernel)?;
            let r = plain_result(&fit, value);
            match &args.null {
                Some(null) => r.with_scaling(scaling_for(null, &kernel)?),
                None => r,
            }
        }
        "ustat" => {
            let r = ustat(&fit, &kernel)?;
            match &args.null {
                Some(null) => r.with_scaling(scaling_for(null, &kernel)?),
                None => r,
            }
        }
        _ => {
            let null = args
                .null
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("mmd needs --null".into()))?;
            MmdReference::new(&kernel, null.build()?)?
                .mmd2(&fit)?
                .with_scaling(Scaling::N)
        }
    };
    Ok(stat_output(result))
}

fn plain_result(fit: &KaplanMeierFit, value: f64) -> StatisticResult {
    StatisticResult {
        value,
        n: fit.n(),
        n_events: fit.sample().n_events(),
        scaling_hint: None,
        components: None,
    }
}

fn run_analyze(args: &AnalyzeArgs) -> Result<Value> {
    let m = &args.model;
    let model = m.model.build()?;
    let joint = m.censor.build(model.clone())?;
    let kernel = m.kernel.build(Some(&m.model))?;
    let regime = classify_regime(model.clone(), &kernel, joint.tau(), args.regime_tol)?;
    let mut out = json!({
        "model": m.model.to_string(),
        "censor": m.censor.to_string(),
        "kernel": m.kernel.to_string(),
        "regime": to_json(&regime),
    });
    let soft = |r: Result<f64>| match r {
        Ok(v) => Ok(json!(v)),
        Err(e) if e.is_numerical() => Ok(json!({ "error": e.to_string() })),
        Err(e) => Err(e),
    };
    if regime.regime == Regime::NonDegenerate {
        let s = sigma2(&joint, &kernel);
        out["sigma2"] = soft(s.clone())?;
        out["clt_variance"] = soft(s.map(|v| 4.0 * v))?;
        out["condition"] = to_json(&condition_check(&joint, &kernel, Condition::Condition1)?);
    } else {
        let kp = kprime(model, &kernel)?;
        out["kprime"] = to_json(&kp.provenance());
        out["asymptotic_mean"] = soft(kmstat_core::nulldist::asymptotic_mean(&joint, &kp))?;
        out["asymptotic_variance"] = soft(kmstat_core::nulldist::asymptotic_variance(&joint, &kp))?;
        out["condition"] = to_json(&condition_check(&joint, &kernel, Condition::Condition2)?);
    }
    Ok(out)
}

fn limit_for(model: &ModelArgs, settings: Nystrom, ustat_limit: bool) -> Result<LimitDistribution> {
    let base = model.model.build()?;
    let joint = model.censor.build(base.clone())?;
    let kernel = model.kernel.build(Some(&model.model))?;
    let kp = kprime(base, &kernel)?;
    let dist = LimitDistribution::for_vstat(&joint, &kp, settings)?;
    if ustat_limit {
        ustat_limit_adjust(&dist, &joint, &kernel)
    } else {
        Ok(dist)
    }
}

fn run_nulldist(args: &NulldistArgs) -> Result<Value> {
    let settings = Nystrom {
        truncation: args.trunc,
        nodes: args.nodes,
        seed: args.seed,
    };
    let dist = limit_for(&args.model, settings, args.ustat)?;
    let mut out = to_json(&dist);
    out["nodes"] = json!(args.nodes);
    out["seed"] = json!(args.seed);
    Ok(out)
}

fn run_simulate(args: &SimulateArgs) -> Result<Value> {
    let mut config = ExperimentConfig::new(args.experiment, args.gamma);
    config.model = args.model.clone();
    config.sizes = args.sizes.clone();
    config.reps = args.reps;
    config.seed = args.seed;
    config.kernel = args.kernel.clone();
    config.grid = args.grid.clone();
    config.regime_tol = args.regime_tol;
    if args.full_scale {
        config = config.full_scale();
    }
    let result = run_experiment(&config)?;
    write_outputs(&result, &args.out)?;
    let summaries: Vec<Value> = result
        .sizes
        .iter()
        .map(|s| json!({ "n": s.n, "summary": to_json(&s.summary) }))
        .collect();
    Ok(json!({
        "out": args.out.display().to_string(),
        "config_hash": config.hash(),
        "reference": to_json(&result.reference),
        "sizes": summaries,
        "comparison": to_json(&compare_asymptotics(&result)),
    }))
}

fn run_test(args: &TestArgs) -> Result<Value> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let fit = load_fit(&args.input)?;
    let null = args.null.build()?;
    let (spec, statistic) = match args.kind {
        TestKind::Cvm => {
            let k = Kernel::cvm(null.clone())?;
            (KernelSpec::Cvm, vstat(&fit, &k)?)
        }
        TestKind::Mmd => {
            let r = MmdReference::new(&Kernel::ou(), null.clone())?;
            (KernelSpec::Ou, r.mmd2(&fit)?.value)
        }
    };
    let scaled = fit.n() as f64 * statistic;
    let model = ModelArgs {
        model: args.null.clone(),
        censor: args.censor.clone(),
        kernel: spec,
    };
    let settings = Nystrom {
        truncation: args.trunc,
        nodes: args.nodes,
        seed: args.seed,
    };
    let dist = limit_for(&model, settings, false)?;
    let tail = upper_tail(&dist, scaled, args.draws, args.seed)?;
    Ok(json!({
        "statistic": statistic,
        "scaled_statistic": scaled,
        "p_value": tail.p_value,
        "p_value_se": tail.standard_error,
        "mc_draws": tail.draws,
        "alpha": args.alpha,
        "decision": if tail.p_value < args.alpha { "reject" } else { "retain" },
        "limit_mean": dist.mean_offset,
    }))
}

fn dispatch(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Vstat(a) => run_stat("vstat", a),
        Command::Ustat(a) => run_stat("ustat", a),
        Command::Mmd(a) => run_stat("mmd", a),
        Command::Analyze(a) => run_analyze(a),
        Command::Nulldist(a) => run_nulldist(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Test(a) => run_test(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = with_workers(cli.threads, || dispatch(&cli)).and_then(|r| r);
    match outcome {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

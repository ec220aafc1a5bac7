use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kmstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmstat"))
        .args(args)
        .output()
        .expect("spawn kmstat")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "kmstat failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_csv(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn vstat_and_ustat_on_uncensored_sample_match_classical_sums() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", "time,event\n1,1\n2,1\n3,1\n");

    let v = json(&kmstat(&["vstat", "--input", &data, "--kernel", "prod:0"]));
    // (mean x)^2 = 4
    assert!((v["value"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(v["n"], 3);
    assert_eq!(v["n_events"], 3);
    assert!(v.as_object().unwrap().contains_key("components"));

    let u = json(&kmstat(&["ustat", "--input", &data, "--kernel", "prod:0"]));
    // sum over i != j of x_i x_j, divided by n(n-1): (36 - 14) / 6
    assert!((u["value"].as_f64().unwrap() - 22.0 / 6.0).abs() < 1e-12);
    assert!(u["components"]["pair_mass"].is_number());
}

#[test]
fn mmd_requires_null_and_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(
        dir.path(),
        "d.csv",
        "time,event\n0.5,1\n1.2,0\n2.0,1\n0.3,1\n",
    );
    let missing = kmstat(&["mmd", "--input", &data]);
    assert_eq!(missing.status.code(), Some(2));

    let m = json(&kmstat(&["mmd", "--input", &data, "--null", "exp:1"]));
    let c = &m["components"];
    let recomposed = c["vstat"].as_f64().unwrap() - 2.0 * c["cross_term"].as_f64().unwrap()
        + c["null_term"].as_f64().unwrap();
    assert!((m["value"].as_f64().unwrap() - recomposed).abs() < 1e-12);
    assert!((c["null_term"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(m["scaling_hint"], "n");
}

#[test]
fn exit_codes_separate_validation_from_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let one_event = write_csv(dir.path(), "one.csv", "time,event\n0.5,1\n1.2,0\n");
    let bad_time = write_csv(dir.path(), "bad.csv", "time,event\n-1,1\n1.2,1\n");

    assert_eq!(
        kmstat(&["ustat", "--input", &one_event]).status.code(),
        Some(3)
    );
    assert_eq!(
        kmstat(&["vstat", "--input", &bad_time]).status.code(),
        Some(2)
    );
    assert_eq!(
        kmstat(&["vstat", "--input", &one_event, "--kernel", "gauss:-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kmstat(&["vstat", "--input", &one_event, "--kernel", "cvm"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kmstat(&["--threads", "0", "vstat", "--input", &one_event])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn analyze_reports_regime_and_variance() {
    let a = json(&kmstat(&[
        "analyze", "--kernel", "prod:0", "--censor", "kg:0.5",
    ]));
    assert_eq!(a["regime"]["regime"], "non_degenerate");
    // Product kernel under exp(1), 1 - G = S^a: sigma^2 = 1 / (1 - a)
    assert!((a["sigma2"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((a["clt_variance"].as_f64().unwrap() - 8.0).abs() < 1e-5);
    assert_eq!(a["condition"]["finite"], true);

    let d = json(&kmstat(&[
        "analyze", "--kernel", "prod:0", "--censor", "kg:1.5",
    ]));
    assert!(d["sigma2"]["error"].as_str().unwrap().contains("diverges"));
    assert_eq!(d["condition"]["finite"], false);

    let c = json(&kmstat(&[
        "analyze", "--kernel", "cvm", "--censor", "kg:0.5",
    ]));
    assert_eq!(c["regime"]["regime"], "degenerate_zero");
    assert!(c["asymptotic_mean"].is_number());
}

#[test]
fn nulldist_spectrum_is_consistent_with_closed_variance() {
    let out = json(&kmstat(&[
        "nulldist", "--kernel", "cvm", "--censor", "kg:0.5", "--nodes", "400", "--trunc", "20",
    ]));
    let eig: Vec<f64> = out["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(eig.len(), 20);
    assert!(eig.windows(2).all(|w| w[0].abs() >= w[1].abs()));
    let closed = out["variance_closed"].as_f64().unwrap();
    let spectral = out["variance_spectral"].as_f64().unwrap();
    assert!(
        (spectral / closed - 1.0).abs() < 0.1,
        "{spectral} vs {closed}"
    );
}

#[test]
fn simulate_outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        json(&kmstat(&[
            "--threads",
            threads,
            "simulate",
            "--experiment",
            "cvm",
            "--gamma",
            "0.5",
            "--n",
            "80,160",
            "--reps",
            "40",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]));
        out
    };
    let a = run("1", "a");
    let b = run("3", "b");
    for file in ["values.csv", "ecdf.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let values = fs::read_to_string(a.join("values.csv")).unwrap();
    assert!(values.starts_with("n,replication,value\n"));
    assert_eq!(values.lines().count(), 1 + 80);
    assert!(!values.contains('\r'));

    let summary: Value =
        serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert!(summary["config_hash"].as_str().unwrap().len() == 64);
    assert!(summary["version"].is_string());
}

#[test]
fn cvm_test_retains_a_null_sample_and_rejects_a_shifted_one() {
    let dir = tempfile::tempdir().unwrap();
    // Exp(1) quantiles at evenly spaced probabilities: about as close to the
    // null as a sample of 200 gets.
    let mut null_body = String::from("time,event\n");
    let mut alt_body = String::from("time,event\n");
    for i in 0..200 {
        let p = (i as f64 + 0.5) / 200.0;
        let x = -(1.0 - p).ln();
        null_body.push_str(&format!("{x},1\n"));
        alt_body.push_str(&format!("{},1\n", 3.0 * x));
    }
    let null = write_csv(dir.path(), "null.csv", &null_body);
    let alt = write_csv(dir.path(), "alt.csv", &alt_body);
    let common = [
        "--null", "exp:1", "--censor", "none", "--draws", "20000", "--nodes", "400",
    ];

    let mut args = vec!["test", "cvm", "--input", &null];
    args.extend(common);
    let r = json(&kmstat(&args));
    assert_eq!(r["decision"], "retain");
    assert_eq!(r["mc_draws"], 20000);
    let s = r["statistic"].as_f64().unwrap();
    assert!((r["scaled_statistic"].as_f64().unwrap() - 200.0 * s).abs() < 1e-9);

    let mut args = vec!["test", "cvm", "--input", &alt];
    args.extend(common);
    let r = json(&kmstat(&args));
    assert_eq!(r["decision"], "reject");
    assert!(r["p_value"].as_f64().unwrap() < 0.01);

    let mut args = vec!["test", "mmd", "--input", &alt];
    args.extend(common);
    assert_eq!(json(&kmstat(&args))["decision"], "reject");

    let bad_alpha = kmstat(&[
        "test", "cvm", "--input", &alt, "--null", "exp:1", "--alpha", "1.5",
    ]);
    assert_eq!(bad_alpha.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use dualtail_cli::commands::strip_timestamp;

fn dualtail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualtail")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"].clone()
}

fn synthetic(dir: &Path, bounded: bool) -> String {
    let mut args = vec!["synth", "--events", "331", "--seed", "7", "--out", dir.to_str().unwrap()];
    if bounded {
        args.push("--bounded");
    }
    stdout_json(&dualtail(&args));
    dir.join("synthetic.csv").display().to_string()
}

#[test]
fn ingest_excerpt_reports_the_reject() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&dualtail(&["ingest", "--out", dir.path().to_str().unwrap()]));
    assert_eq!(v["accepted"], 5);
    assert_eq!(v["rejected"], 1);
    assert!(v["rejects"][0]["raw"].as_str().unwrap().starts_with("Boudicca"));
    assert_eq!(v["extremes"].as_array().unwrap().len(), 3);
    let rejects = std::fs::read_to_string(dir.path().join("excerpt.rejects.csv")).unwrap();
    assert_eq!(rejects.lines().count(), 2);
    assert!(dir.path().join("ingest.json").is_file());
}

#[test]
fn fit_on_excerpt_has_estimates_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = stdout_json(&dualtail(&[
        "fit", "--view", "raw", "--threshold", "25000", "--min-exceedances", "4", "--seed", "1", "--out", out,
    ]));
    let fit = &v["fits"][0];
    for key in [
        "view", "threshold", "n_exceed", "xi", "se_xi", "sigma", "se_sigma", "loglik", "gof_stat", "gof_p",
        "moments_finite_up_to",
    ] {
        assert!(fit.get(key).is_some(), "missing {key}");
    }
    assert_eq!(fit["n_exceed"], 4);
    assert!(fit["xi"].is_f64());
    assert!(dir.path().join("excerpt.raw.u25000.residual_qq.csv").is_file());

    // the default floor of 30 exceedances is not met
    let err = stderr_error(&dualtail(&["fit", "--view", "raw", "--threshold", "25000", "--seed", "1", "--out", out]));
    assert_eq!(err["kind"], "insufficient_data");
}

#[test]
fn shadow_ratios_exceed_one_on_heavy_synthetic_history() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), true);
    let out = dir.path().join("shadow");
    let v = stdout_json(&dualtail(&["shadow", "--input", &input, "--seed", "1", "--out", out.to_str().unwrap()]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 14);
    for name in ["synthetic.rescaled.shadow_mean.csv", "synthetic.rescaled.shadow_sd.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("threshold,shadow,sample,ratio,moment"));
        for line in lines {
            let ratio: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!(ratio > 1.0, "{name}: {line}");
        }
    }
}

#[test]
fn report_is_byte_stable_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), false);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        stdout_json(&dualtail(&[
            "report", "--input", &input, "--view", "raw", "--seed", "9", "--runs", "1000", "--threads", threads, "--out",
            out.to_str().unwrap(),
        ]));
        std::fs::read_to_string(out.join("report.json")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    assert!(a.contains("\"generated_at\""));
    assert_eq!(strip_timestamp(&a), strip_timestamp(&b));
    assert_eq!(strip_timestamp(&a), strip_timestamp(&c));
    let v: Value = serde_json::from_str(&a).unwrap();
    for section in ["ingest", "diagnostics", "fit", "shadow", "robust", "arrivals"] {
        assert!(v[section].get("error").is_none(), "{section}: {}", v[section]);
    }
    assert_eq!(v["config"]["seed"], 9);
}

#[test]
fn report_on_excerpt_records_failed_sections() {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&dualtail(&["report", "--seed", "3", "--runs", "1000", "--out", dir.path().to_str().unwrap()]));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["ingest"]["accepted"], 5);
    assert_eq!(v["fit"]["error"]["kind"], "insufficient_data");
}

#[test]
fn generated_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&dualtail(&["synth", "--events", "10", "--out", dir.path().to_str().unwrap()]));
    assert!(v["config"]["seed"].is_u64());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "view = \"raw\"\nthresholds = [1e9]\nseed = 4\n").unwrap();
    let out = dir.path().to_str().unwrap();
    // the file's threshold selects nothing
    let err = stderr_error(&dualtail(&["diagnose", "--config", cfg.to_str().unwrap(), "--out", out]));
    assert_eq!(err["kind"], "empty_selection");
    let v = stdout_json(&dualtail(&[
        "diagnose", "--config", cfg.to_str().unwrap(), "--threshold", "3000", "--out", out,
    ]));
    assert_eq!(v["view"], "raw");
    assert_eq!(v["n"], 5);
    for kind in ["meplot", "qq", "zipf", "msplot", "records"] {
        assert!(dir.path().join(format!("excerpt.raw.{kind}.csv")).is_file(), "{kind}");
    }
}

#[test]
fn commands_are_idempotent_and_leave_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), false);
    let before = std::fs::read(&input).unwrap();
    let out = dir.path().join("arr");
    let args = ["arrivals", "--input", &input, "--view", "raw", "--seed", "2", "--out", out.to_str().unwrap()];
    let first = dualtail(&args);
    let second = dualtail(&args);
    assert_eq!(stdout_json(&first), stdout_json(&second));
    assert_eq!(std::fs::read(&input).unwrap(), before);
    // atomic writes leave no temporary files behind
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| n.starts_with("synthetic.")), "{names:?}");
    let v = stdout_json(&first);
    assert_eq!(v["gaps"].as_array().unwrap().len(), 21);
    assert!(v["battery"]["chi_square"]["p_value"].is_f64());
}

#[test]
fn usage_and_input_errors_are_json() {
    let err = stderr_error(&dualtail(&["fit", "--view", "sideways"]));
    assert_eq!(err["kind"], "usage");
    let err = stderr_error(&dualtail(&["ingest", "--input", "/no/such/file.csv"]));
    assert_eq!(err["kind"], "cli");
    assert!(err["message"].as_str().unwrap().contains("not found"));
    let err = stderr_error(&dualtail(&["shadow", "--view", "dual", "--out", "/tmp/unused-dualtail"]));
    assert_eq!(err["kind"], "invalid_input");
}

#[test]
fn robust_writes_xi_samples() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), false);
    let out = dir.path().join("rob");
    let v = stdout_json(&dualtail(&[
        "robust", "--input", &input, "--view", "raw", "--runs", "1000", "--seed", "5", "--out", out.to_str().unwrap(),
    ]));
    assert!(v["bootstrap"]["fraction_xi_leq_1"].as_f64().unwrap() < 0.05);
    for scheme in ["bootstrap", "jackknife", "fuzzy"] {
        let text = std::fs::read_to_string(out.join(format!("synthetic.raw.{scheme}.xi.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + v[scheme]["n_runs"].as_u64().unwrap() as usize);
    }
    assert_eq!(v["estimates"].as_array().unwrap().len(), 3);
}

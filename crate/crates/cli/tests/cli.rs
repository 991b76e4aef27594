use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coreshell::sim::read_result_csv;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn config() -> PathBuf {
    assets().join("config/example.json")
}

fn profile(name: &str) -> PathBuf {
    assets().join("profiles").join(name)
}

fn coreshell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coreshell")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not an error record ({e}): {text}"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_c4_charge_reaches_full_through_the_plateau() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = coreshell(&["--config", s(&config()), "simulate", "--profile", s(&profile("cc_c4_charge.csv")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let rows = read_result_csv(&out.join("result.csv")).unwrap();
    let last = rows.last().unwrap();
    assert!((last.soc_p - 1.0).abs() < 1e-6, "final soc_p {}", last.soc_p);
    assert!(rows.iter().any(|r| r.regime.starts_with("two_phase")));
    assert!(rows.first().unwrap().regime.starts_with("one_phase"));
    assert!(last.regime.starts_with("one_phase"));

    let events = std::fs::read_to_string(out.join("events.csv")).unwrap();
    assert!(events.contains("enter_two_phase") && events.contains("exit_two_phase"));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["termination"], "completed");
    assert!(summary["max_drift_positive"].as_f64().unwrap() < 1e-6);
}

#[test]
fn result_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = coreshell(&["--config", s(&config()), "simulate", "--profile", s(&profile("udds_like.csv")), "--soc0", "0.6", "--out", s(&out)]);
    assert!(o.status.success());
    let rows = read_result_csv(&out.join("result.csv")).unwrap();
    let again = out.join("again.csv");
    coreshell::sim::write_result_csv(&again, &rows).unwrap();
    assert_eq!(read_result_csv(&again).unwrap(), rows);
    assert_eq!(std::fs::read(out.join("result.csv")).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn observe_two_volumes_under_constant_current() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let mut c = read_json(&config());
    // rebase the relative asset paths onto the temporary config
    for key in ["positive_charge", "positive_discharge", "negative"] {
        let p = c["ocp"][key].as_str().unwrap().replace("..", s(&assets()));
        c["ocp"][key] = p.into();
    }
    c["parameters"] = assets().join("params/lfp_reference.json").to_str().unwrap().into();
    c["observability"]["rank_tol"] = 1e-10.into();
    std::fs::write(&cfg, c.to_string()).unwrap();

    let out = dir.path().join("obs");
    let o = coreshell(&["--config", s(&cfg), "observe", "--profile", s(&profile("cc_1c_charge.csv")), "--nr", "2", "--scheme", "fvm", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("observability.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["time_s", "soc_p", "regime", "rank", "full_rank_needed", "log10_cond_scaled", "log10_cond_raw"]
    );
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[3], rec[4], "rank loss at t = {}", &rec[0]);
        n += 1;
    }
    assert!(n > 100);
}

#[test]
fn cycle_writes_an_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cyc");
    let o = coreshell(&["--config", s(&config()), "cycle", "--crate", "1", "--cycles", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("cycle_report.json"));
    assert_eq!(r["peak_positive"].as_array().unwrap().len(), 2);
    assert!(r["audit"]["max_positive"].as_f64().unwrap() < 1e-6);
}

#[test]
fn compare_scheme_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = coreshell(&["--config", s(&config()), "compare-scheme", "--profile", s(&profile("cc_1c_charge.csv")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["voltage.csv", "mass_drift.csv", "conditioning.csv", "comparison.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let c = read_json(&out.join("comparison.json"));
    let fvm = c["fvm"]["max_drift_positive"].as_f64().unwrap();
    let fdm = c["fdm"]["max_drift_positive"].as_f64().unwrap();
    assert!(fdm > 10.0 * fvm, "fvm {fvm} fdm {fdm}");
}

#[test]
fn synthesize_then_identify() {
    let dir = tempfile::tempdir().unwrap();
    let prof = dir.path().join("p.csv");
    let rows: String = (0..=120).map(|k| format!("{},7.4743\n", 10 * k)).collect();
    std::fs::write(&prof, format!("time_s,current_A\n{rows}")).unwrap();
    let data = dir.path().join("data");
    let o = coreshell(&["--config", s(&config()), "synthesize", "--profile", s(&prof), "--noise-mv", "0.5", "--seed", "3", "--out", s(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let fit = dir.path().join("fit");
    let (cfg, dataset) = (config(), data.join("dataset.csv"));
    let args = [
        "--config",
        s(&cfg),
        "identify",
        "--data",
        s(&dataset),
        "--subset",
        "c2-1c",
        "--seed",
        "5",
        "--budget",
        "12",
        "--out",
        s(&fit),
    ];
    let o = coreshell(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&fit.join("fit.json"));
    assert_eq!(r["evaluations"], 12);
    assert_eq!(r["seed"], 5);
    assert_eq!(r["names"].as_array().unwrap().len(), 4);
    let trace: Vec<f64> = r["trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    let params: coreshell::ParameterSet = serde_json::from_str(&std::fs::read_to_string(fit.join("parameters.json")).unwrap()).unwrap();
    params.cell.validate().unwrap();

    // same seed, same inputs: identical report
    let fit2 = dir.path().join("fit2");
    let mut args2 = args;
    args2[12] = s(&fit2);
    assert!(coreshell(&args2).status.success());
    assert_eq!(std::fs::read(fit.join("fit.json")).unwrap(), std::fs::read(fit2.join("fit.json")).unwrap());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = coreshell(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "usage");
}

#[test]
fn missing_profile_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = coreshell(&["--config", s(&config()), "simulate", "--profile", "/no/such/profile.csv", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"], "missing_file");
    assert!(!out.exists());
}

#[test]
fn invalid_config_exits_4_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"discretization": {"n_r": 1}}"#).unwrap();
    let out = dir.path().join("never");
    let o = coreshell(&["--config", s(&cfg), "simulate", "--profile", s(&profile("cc_c4_charge.csv")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["error"], "invalid_config");
    assert!(!out.exists());
}

#[test]
fn simulation_failure_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    // with the lower voltage limit disabled, a hard discharge drives the
    // negative particle empty
    let cfg = dir.path().join("c.json");
    let mut c = read_json(&config());
    for key in ["positive_charge", "positive_discharge", "negative"] {
        let p = c["ocp"][key].as_str().unwrap().replace("..", s(&assets()));
        c["ocp"][key] = p.into();
    }
    c["parameters"] = assets().join("params/lfp_reference.json").to_str().unwrap().into();
    c["solver"]["v_min"] = (-100.0).into();
    std::fs::write(&cfg, c.to_string()).unwrap();
    let prof = dir.path().join("p.csv");
    std::fs::write(&prof, "time_s,current_A\n0,40\n4000,40\n").unwrap();
    let out = dir.path().join("partial");
    let o = coreshell(&["--config", s(&cfg), "simulate", "--profile", s(&prof), "--soc0", "0.05", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_record(&o)["error"], "simulation");
    // the partial trajectory is kept for diagnosis
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["termination"].get("domain_exit").is_some(), "{summary}");
}

#[test]
fn missing_output_directory_is_a_usage_error() {
    let o = coreshell(&["--config", s(&config()), "simulate", "--profile", s(&profile("cc_c4_charge.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

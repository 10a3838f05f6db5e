use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmoopt::output::{from_json, to_json, CertificateReport, RateFitReport, SummaryRecord};
use lmoopt::verify::VerifyReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lmoopt"));
    c.env_remove("LMOOPT_OUT").env("RUST_LOG", "warn");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn call(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args);
    if let Some(cfg) = config {
        c.arg("--config").arg(cfg);
    }
    c.arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MINIMAL: &str = r#"{
  "problem": {"name": "noisy_quadratic", "params": {"dim": 4, "eigenvalues": [1, 2, 3, 4], "sigma": 0.5, "seed": 3}},
  "method": {"class": "stochastic_lmo", "set": {"geometry": "euclidean", "radius": 1.0}, "schedule": "thm1"},
  "run": {"T": 20, "seed": 11, "seeds": 2, "stride": 5}
}"#;

#[test]
fn run_writes_trace_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let out = tmp.path().join("out");
    let o = call(&["run"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 20 / 5 + 2);
    assert_eq!(lines[0], "step,loss,grad_norm,rsf,step_norm,eps_hat,grad_evals,wall_ns");
    let steps: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["0", "5", "10", "15", "20"]);
    let summary: SummaryRecord = from_json(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.schema_version, 1);
    assert_eq!(summary.seeds, 2);
    assert_eq!(summary.methods[0].grad_evals, 21);
    assert_eq!(summary.methods[0].schedule.as_deref(), Some("thm1"));
}

#[test]
fn same_config_gives_identical_trace_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(call(&["run"], Some(&cfg), &a).status.code(), Some(0));
    assert_eq!(call(&["run"], Some(&cfg), &b).status.code(), Some(0));
    assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn summary_reserializes_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let out = tmp.path().join("out");
    assert_eq!(call(&["run", "--certify", "--seeds", "10"], Some(&cfg), &out).status.code(), Some(0));
    let text = fs::read_to_string(out.join("summary.json")).unwrap();
    let parsed: SummaryRecord = from_json(&text).unwrap();
    assert!(parsed.methods[0].certificate.is_some());
    assert_eq!(to_json(&parsed).unwrap(), text);
}

#[test]
fn env_var_sets_default_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let out = tmp.path().join("from_env");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("LMOOPT_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("trace.csv").exists());
}

#[test]
fn decay_step_product_above_one_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"problem": {"name": "noisy_quadratic", "params": {"dim": 3}},
            "method": {"class": "stochastic_lmo", "set": {"geometry": "euclidean", "radius": 1.0},
                       "params": {"lambda": 2.0, "eta2": 1.0}},
            "run": {"T": 10}}"#,
    );
    let o = call(&["run"], Some(&cfg), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda*eta1"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").join("trace.csv").exists());
}

#[test]
fn unknown_key_reports_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        "{\"problem\": {\"name\": \"noisy_quadratic\", \"params\": {\"dim\": 3}},\n \"method\": {\"class\": \"igt\", \"set\": {\"geometry\": \"linf\", \"radius\": 1.0}, \"schedule\": \"cor2\"},\n \"run\": {\"T\": 10, \"bogus\": 1}}",
    );
    let o = call(&["run"], Some(&cfg), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("bogus"), "{e}");
}

#[test]
fn missing_config_file_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = call(&["run"], Some(&tmp.path().join("absent.json")), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = call(&["run"], Some(&cfg), &blocker);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

fn sweep_config(horizons: &str) -> String {
    format!(
        r#"{{"problem": {{"name": "noisy_quadratic", "params": {{"dim": 4, "eigenvalues": [0.5, 1, 2, 4], "seed": 1}}}},
            "method": [
              {{"class": "stochastic_lmo", "set": {{"geometry": "euclidean", "radius": 1.0}}, "schedule": "cor4"}},
              {{"class": "variance_reduced", "set": {{"geometry": "euclidean", "radius": 1.0}}, "schedule": "cor1"}},
              {{"class": "igt", "set": {{"geometry": "euclidean", "radius": 1.0}}, "schedule": "cor3"}}],
            "run": {{"horizons": {horizons}, "stride": 64}}}}"#
    )
}

#[test]
fn sweep_fits_one_rate_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &sweep_config("[256, 1024, 4096]"));
    let out = tmp.path().join("out");
    let o = call(&["sweep"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: RateFitReport = from_json(&fs::read_to_string(out.join("ratefit.json")).unwrap()).unwrap();
    assert_eq!(report.horizons, [256, 1024, 4096]);
    assert_eq!(report.fits.len(), 3);
    assert_eq!(report.fits[0].class, "stochastic_lmo");
    assert!(report.fits[0].fit.slope < 0.0, "{:?}", report.fits[0]);
    for t in [256, 1024, 4096] {
        assert!(out.join(format!("T{t}")).join("summary.json").exists());
    }
}

#[test]
fn sweep_with_one_horizon_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &sweep_config("[256, 256]"));
    let o = call(&["sweep"], Some(&cfg), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.horizons"));
}

#[test]
fn noiseless_certificate_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"problem": {"name": "noisy_quadratic", "params": {"dim": 5, "eigenvalues": [0.5, 1, 2, 3, 4]}},
            "method": {"class": "stochastic_lmo", "set": {"geometry": "euclidean", "radius": 1.0}, "schedule": "cor4"},
            "run": {"T": 2048}}"#,
    );
    let out = tmp.path().join("out");
    let o = call(&["certify"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("certificate.json")).unwrap();
    let r: CertificateReport = from_json(&text).unwrap();
    assert!(r.pass);
    let c = &r.certificates[0];
    assert_eq!(c.slack, 0.0);
    assert!(c.empirical_mean <= c.bound_value + 1e-9);
    assert_eq!(to_json(&r).unwrap(), text);
}

#[test]
fn certificate_with_mismatched_params_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"problem": {"name": "noisy_quadratic", "params": {"dim": 3}},
            "method": {"class": "igt", "set": {"geometry": "euclidean", "radius": 1.0},
                       "params": {"beta1": 0.5, "beta2": 0.9, "eta1": 0.01, "eta2": 0.01}},
            "run": {"T": 10}}"#,
    );
    let o = call(&["certify"], Some(&cfg), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn noisy_certificate_needs_ten_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let o = call(&["certify", "--seeds", "3"], Some(&cfg), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_clean_and_fails_tampered() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("clean");
    let o = call(&["verify"], None, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: VerifyReport = from_json(&fs::read_to_string(out.join("verify_report.json")).unwrap()).unwrap();
    assert!(r.all_pass);
    let lemmas: std::collections::BTreeSet<&str> = r.entries.iter().map(|e| e.lemma.as_str()).collect();
    for l in ["step_geometry", "descent_rule", "igt_extrapolation", "second_order_remainder", "martingale_second_moment"] {
        assert!(lemmas.contains(l), "{l} missing");
    }

    let out = tmp.path().join("tampered");
    let o = call(&["verify", "--tamper-step", "1.5"], None, &out);
    assert_eq!(o.status.code(), Some(1));
    let r: VerifyReport = from_json(&fs::read_to_string(out.join("verify_report.json")).unwrap()).unwrap();
    assert!(r.entries.iter().any(|e| e.lemma == "step_geometry" && !e.pass));
}

#[test]
fn reference_is_valid_json() {
    let o = bin().arg("reference").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.get("run").is_some());
}

#[test]
fn bad_flag_is_usage_error() {
    let o = bin().args(["run", "--nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

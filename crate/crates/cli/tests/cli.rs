use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn privexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privexp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn json(p: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(dir.path(), "a.json"), path(dir.path(), "b.json"));
    let cfg = shipped("simulate_bernoulli.json");
    for out in [&a, &b] {
        let o = privexp(&["simulate", "--config", &cfg, "--seed", "1", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let data = json(&a);
    let records = data["records"].as_array().unwrap();
    assert_eq!(records.len(), 5);
    assert!(records.iter().all(|r| r == 0 || r == 1));
    assert_eq!(data["seed"], 1);
    assert_eq!(data["theta_true"][0], 0.3);
}

#[test]
fn simulated_exponential_mean_is_near_its_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "d.json");
    let o = privexp(&["simulate", "--config", &shipped("simulate_exponential.json"), "--seed", "3", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let xs: Vec<f64> = json(&out)["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(xs.len(), 10_000);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", r#"{"family":"bernoulli","theta_true":[0.3]}"#);
    let o = privexp(&["simulate", "--config", &cfg, "--out", &path(dir.path(), "x.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`n`"), "{}", stderr(&o));

    let cfg = write(dir.path(), "bad.json", r#"{"family":"bernoulli","theta_true":[1.3],"n":4}"#);
    let o = privexp(&["simulate", "--config", &cfg, "--out", &path(dir.path(), "x.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta_true"), "{}", stderr(&o));

    let exp = write(dir.path(), "exp.json", r#"{"family":"bernoulli","prior":{"alpha":1,"beta":1},"n":[10]}"#);
    let o = privexp(&["calibrate", "--config", &exp, "--out", &path(dir.path(), "cal")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));
}

#[test]
fn release_dispatches_on_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let bern = path(dir.path(), "bern.json");
    privexp(&["simulate", "--config", &shipped("simulate_bernoulli.json"), "--seed", "1", "--out", &bern]);
    let rel = path(dir.path(), "rel.json");
    let o = privexp(&["release", "--data", &bern, "--epsilon", "1", "--seed", "2", "--out", &rel]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&rel);
    assert_eq!(r["delta_s"], 1.0);
    assert_eq!(r["family"], "bernoulli");
    assert_eq!(r["n"], 5);

    let expo = path(dir.path(), "expo.json");
    privexp(&["simulate", "--config", &shipped("simulate_exponential.json"), "--seed", "1", "--out", &expo]);
    let o = privexp(&["release", "--data", &expo, "--epsilon", "1", "--out", &rel]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--bounds"), "{}", stderr(&o));

    let o = privexp(&["release", "--data", &expo, "--epsilon", "1", "--bounds", "0.1", "1.5", "--out", &rel]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&rel);
    assert_eq!(r["delta_s"], 1.5);
    assert_eq!(r["bounds"], serde_json::json!([0.1, 1.5]));

    let o = privexp(&["release", "--data", &expo, "--epsilon", "1", "--bounds", "2", "1", "--out", &rel]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn infer_writes_deterministic_chains() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.json");
    let rel = path(dir.path(), "r.json");
    privexp(&["simulate", "--config", &shipped("simulate_bernoulli.json"), "--seed", "1", "--out", &data]);
    privexp(&["release", "--data", &data, "--epsilon", "1", "--out", &rel]);
    let prior = shipped("prior_bernoulli.json");
    let (a, b, t) = (path(dir.path(), "a.ndjson"), path(dir.path(), "b.ndjson"), path(dir.path(), "t.ndjson"));
    for out in [&a, &b] {
        let o = privexp(&[
            "infer", "--release", &rel, "--prior", &prior, "--iters", "300", "--burnin", "100", "--seed", "4", "--out",
            out,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 200);
    assert_eq!(lines[0]["iter"], 100);
    for key in ["theta", "s", "sigma2"] {
        assert!(lines[0][key].is_array(), "{key}");
    }

    let o = privexp(&[
        "infer", "--release", &rel, "--prior", &prior, "--iters", "300", "--burnin", "100", "--seed", "4", "--trace",
        "--out", &t,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traced = fs::read_to_string(&t).unwrap();
    assert_eq!(traced.lines().count(), 300);
    assert!(traced.starts_with(r#"{"iter":0,"#));
}

#[test]
fn infer_rejects_mismatched_prior() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.json");
    let rel = path(dir.path(), "r.json");
    privexp(&["simulate", "--config", &shipped("simulate_bernoulli.json"), "--out", &data]);
    privexp(&["release", "--data", &data, "--epsilon", "1", "--out", &rel]);
    let o = privexp(&[
        "infer", "--release", &rel, "--prior", &shipped("prior_exponential.json"), "--out", &path(dir.path(), "c"),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("mismatch"), "{}", stderr(&o));

    let o = privexp(&[
        "infer", "--release", &rel, "--prior", &shipped("prior_bernoulli.json"), "--iters", "10", "--burnin", "10",
        "--out", &path(dir.path(), "c"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

const SMALL_EXPERIMENT: &str = r#"{"family":"bernoulli","prior":{"alpha":1,"beta":1},"n":[100],"epsilon":[0.1,1.0],
    "trials":12,"iters":400,"burnin":100,"seed":5,"methods":["gibbs","naive","ops","nonprivate"],
    "posterior_samples":300,"mmd_samples":60}"#;

#[test]
fn calibrate_writes_tables_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.json", SMALL_EXPERIMENT);
    let (a, b) = (path(dir.path(), "a"), path(dir.path(), "b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = privexp(&["calibrate", "--config", &cfg, "--jobs", jobs, "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["calibration.csv", "ecdf.csv", "utility.csv", "summary.json"] {
        let x = fs::read(Path::new(&a).join(f)).unwrap();
        assert_eq!(x, fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
    let cal = fs::read_to_string(Path::new(&a).join("calibration.csv")).unwrap();
    let mut lines = cal.lines();
    assert_eq!(lines.next(), Some("method,n,epsilon,trials,D,p"));
    // four methods times two cells
    assert_eq!(lines.count(), 8);
    for m in ["gibbs", "naive", "ops", "nonprivate"] {
        assert!(cal.contains(&format!("\n{m},100,")), "{m}");
    }
    let runtime = json(&path(Path::new(&a), "runtime.json"));
    assert!(runtime["seconds"].as_f64().unwrap() >= 0.0);
    let summary = json(&path(Path::new(&a), "summary.json"));
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn calibrate_seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.json", SMALL_EXPERIMENT);
    let (a, b) = (path(dir.path(), "a"), path(dir.path(), "b"));
    privexp(&["calibrate", "--config", &cfg, "--out", &a]);
    privexp(&["calibrate", "--config", &cfg, "--seed", "6", "--out", &b]);
    let ecdf = |d: &str| fs::read_to_string(Path::new(d).join("ecdf.csv")).unwrap();
    assert_ne!(ecdf(&a), ecdf(&b));
}

#[test]
fn utility_writes_mmd_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.json", SMALL_EXPERIMENT);
    let out = path(dir.path(), "u");
    let o = privexp(&["utility", "--config", &cfg, "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(Path::new(&out).join("utility.csv")).unwrap();
    assert!(table.starts_with("method,n,epsilon,trial,mmd2\n"), "{table}");
    assert!(table.contains("\ngibbs,") && table.contains("\nnaive,"));
    assert!(!table.contains("\nnonprivate,"));
}

#[test]
fn trace_includes_burn_in() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "trace.ndjson");
    let o = privexp(&["trace", "--config", &shipped("trace_exponential.json"), "--iters", "50", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Value> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 20 * 50);
    assert_eq!(lines[0]["run"], 0);
    assert_eq!(lines[0]["iter"], 0);
    assert_eq!(lines[50]["run"], 1);
    assert!(lines[0]["s_center"].is_number());
}

#[test]
fn missing_input_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = privexp(&[
        "release", "--data", &path(dir.path(), "absent.json"), "--epsilon", "1", "--out", &path(dir.path(), "r"),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

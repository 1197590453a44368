use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use varcontract::Scenario;

const UNIFORM_LOG: &str = r#"{
    "loss": {"type": "continuous_truncated", "family": {"name": "uniform"}, "support_max": 1.0},
    "utility": {"type": "log"},
    "w0": 3.0, "rho": 0.0, "nu": 0.04
}"#;

const BERNOULLI: &str = r#"{
    "loss": {"type": "discrete", "atoms": [[0.0, 0.5], [10.0, 0.5]]},
    "utility": {"type": "log"},
    "w0": 30.0, "rho": 0.0, "nu": 4.0
}"#;

fn with(base: &str, extra: &str) -> String {
    let mut v: Value = serde_json::from_str(base).unwrap();
    let e: Value = serde_json::from_str(extra).unwrap();
    for (k, x) in e.as_object().unwrap() {
        v[k] = x.clone();
    }
    v.to_string()
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn vc(&self, command: &str, config: &str, out: &str, extra: &[&str]) -> Output {
        let cfg = self.path("config.json");
        fs::write(&cfg, config).unwrap();
        Command::new(env!("CARGO_BIN_EXE_vc"))
            .arg(command)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(self.path(out))
            .arg("--quiet")
            .args(extra)
            .env("VC_THREADS", "2")
            .output()
            .unwrap()
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn solve_two_point() {
    let r = Run::new();
    let o = r.vc("solve", BERNOULLI, "s.csv", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&r.path("s.csv.summary.json"));
    assert_eq!(s["regime"], "two-point");
    assert!((s["parameters"]["pay"].as_f64().unwrap() - 4.0).abs() < 1e-10);
    assert_eq!(s["parameters"]["jump_at"].as_f64().unwrap(), 10.0);
    let csv = fs::read_to_string(r.path("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,indemnity,retention,marginal,exposure,phi_kkt");
    assert_eq!(lines[2], "10,4,6,0.4,2,");
}

#[test]
fn solve_slack_emits_deductible() {
    let r = Run::new();
    let cfg = with(UNIFORM_LOG, r#"{"nu": 0.5}"#);
    let o = r.vc("solve", &cfg, "s.csv", &["--grid-n", "101"]);
    assert_eq!(code(&o), 0);
    let s = json(&r.path("s.csv.summary.json"));
    assert_eq!(s["regime"], "slack-stop-loss");
    assert_eq!(s["parameters"]["d_star"].as_f64().unwrap(), 0.0);
    let csv = fs::read_to_string(r.path("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn solve_is_byte_deterministic() {
    let r = Run::new();
    assert_eq!(code(&r.vc("solve", UNIFORM_LOG, "a.csv", &[])), 0);
    assert_eq!(code(&r.vc("solve", UNIFORM_LOG, "b.csv", &[])), 0);
    assert_eq!(fs::read(r.path("a.csv")).unwrap(), fs::read(r.path("b.csv")).unwrap());
    let csv = fs::read_to_string(r.path("a.csv")).unwrap();
    // every interior row has a KKT value except the top node
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows[..rows.len() - 1].iter().all(|l| !l.ends_with(',')));
    assert!(rows.last().unwrap().ends_with(','));
}

#[test]
fn certify_reports_agreement() {
    let r = Run::new();
    let o = r.vc("certify", UNIFORM_LOG, "c.json", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&r.path("c.json"));
    assert_eq!(c["agree"], true);
    assert!(c["sup_norm_gap"].as_f64().unwrap() < 3.0 / 401.0);
    assert_eq!(c["kkt"]["passed"], true);
}

#[test]
fn compare_variance_report() {
    let r = Run::new();
    let cfg = with(UNIFORM_LOG, r#"{"compare": {"nu1": 0.02, "nu2": 0.05}}"#);
    let o = r.vc("compare-variance", &cfg, "v.json", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&r.path("v.json"));
    assert_eq!(v["exposure_crossings"]["count"], 1);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(r.path("v.json.schedules.csv").exists());
}

#[test]
fn compare_wealth_needs_dap_utility() {
    let r = Run::new();
    let cfg = with(UNIFORM_LOG, r#"{"utility": {"type": "cara", "a": 1.0}, "compare": {"w1": 3.0, "w2": 4.0}}"#);
    let o = r.vc("compare-wealth", &cfg, "w.json", &[]);
    assert_eq!(code(&o), 7);
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "precondition");
}

#[test]
fn compare_without_pair_is_a_validation_error() {
    let r = Run::new();
    assert_eq!(code(&r.vc("compare-wealth", UNIFORM_LOG, "w.json", &[])), 2);
}

#[test]
fn sweep_metadata_round_trips() {
    let r = Run::new();
    let cfg = with(
        r#"{
            "loss": {"type": "continuous_truncated", "family": {"name": "uniform"}, "support_max": 1.0},
            "utility": {"type": "cara", "a": 1.0},
            "w0": 2.0, "nu": 0.005
        }"#,
        r#"{"sweep": {"parameter": "rho", "values": [0.0, 0.05, 0.2]}}"#,
    );
    let o = r.vc("sweep", &cfg, "sw.csv", &["--grid-n", "201"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let meta = json(&r.path("sw.csv.meta.json"));
    let base = Scenario::from_json(&cfg).unwrap();
    for (p, v) in meta["points"].as_array().unwrap().iter().zip([0.0, 0.05, 0.2]) {
        let parsed = Scenario::from_json(&p["scenario"].to_string()).unwrap();
        let mut expected = base.with_parameter(varcontract::SweepParameter::Rho, v);
        expected.grid_n = 201;
        assert_eq!(parsed, expected);
        let reparsed = Scenario::from_json(&parsed.to_json()).unwrap();
        assert_eq!(reparsed, parsed);
    }
    let csv = fs::read_to_string(r.path("sw.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 201);
    assert!(csv.lines().nth(1).unwrap().starts_with("rho,0,interior-fair,"));
}

#[test]
fn invalid_config_lists_all_violations() {
    let r = Run::new();
    let cfg = with(UNIFORM_LOG, r#"{"rho": -1.0, "nu": -2.0}"#);
    let o = r.vc("solve", &cfg, "s.csv", &[]);
    assert_eq!(code(&o), 2);
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("rho") && msg.contains("nu"), "{msg}");
}

#[test]
fn missing_config_is_an_io_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_vc"))
        .args(["solve", "--config", "/nonexistent/config.json", "--out", "/tmp/x.csv", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 6);
}

#[test]
fn interior_atoms_are_unsupported() {
    let r = Run::new();
    let cfg = with(
        BERNOULLI,
        r#"{"loss": {"type": "discrete", "atoms": [[0.0, 0.3], [5.0, 0.3], [10.0, 0.4]]}, "nu": 2.0}"#,
    );
    assert_eq!(code(&r.vc("solve", &cfg, "s.csv", &[])), 5);
}

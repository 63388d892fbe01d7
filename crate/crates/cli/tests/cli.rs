use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qgrad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgrad"))
        .args(args)
        .output()
        .expect("spawn qgrad")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    qgrad(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUADRATIC: &str = "seed = 11\n[potential]\nname = quadratic\n[dynamics]\ngamma = 1\n[initial]\nu = 1, 1\n";

#[test]
fn simulate_quadratic_writes_trajectory_and_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.conf", QUADRATIC);
    let out = tmp.path().join("out");
    let o = run("simulate", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,u_1,u_2,v_1,v_2,E_total,grad_norm"));
    assert!(lines.count() >= 2);
    let run = json(&out.join("run.json"));
    assert_eq!(run["classification"]["status"], "Converged");
}

#[test]
fn negative_gamma_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.conf", &QUADRATIC.replace("gamma = 1", "gamma = -1"));
    let o = run("simulate", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dynamics.gamma"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.conf", &format!("{QUADRATIC}[dynamics]\ngama = 2\n"));
    let o = run("simulate", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dynamics.gama"), "{}", stderr(&o));
}

#[test]
fn missing_file_exits_one() {
    let tmp = TempDir::new().unwrap();
    let o = run("simulate", &tmp.path().join("nope.conf"), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn neg_quadratic_escapes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "neg.conf",
        "[potential]\nname = neg_quadratic\ndim = 2\n[initial]\nu = 0.1, 0\n",
    );
    let out = tmp.path().join("out");
    let o = run("simulate", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&out.join("run.json"))["classification"]["status"], "Escaped");
}

#[test]
fn certify_quadratic_constants() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.conf", &format!("{QUADRATIC}[certify]\nradius = 1\n"));
    let out = tmp.path().join("out");
    let o = run("certify", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = json(&out.join("certificate.json"));
    let f = |k: &str| c[k].as_f64().unwrap();
    assert!((f("M") - 1.0).abs() < 1e-9);
    assert!((f("lambda_zero") - 1.0 / 3.0).abs() < 1e-9);
    assert!((f("lambda_one") - 0.25).abs() < 1e-12);
    assert!((f("lambda_star") - 0.125).abs() < 1e-12);
    assert!(f("alpha0") > 0.0 && f("alpha_certified") > 0.0);
    assert!(f("alpha_sampled") >= f("alpha_certified"));
    assert_eq!(c["valid"], true);
}

#[test]
fn certify_with_lambda_zero_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.conf", &format!("{QUADRATIC}[certify]\nlambda = 0\n"));
    let out = tmp.path().join("out");
    let o = run("certify", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let c = json(&out.join("certificate.json"));
    assert!(c["alpha_sampled"].as_f64().unwrap() <= 1e-6);
    assert_eq!(c["valid"], false);
}

#[test]
fn certify_without_hessian_is_a_capability_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "ns.conf", "[potential]\nname = nonsmooth_32\n[initial]\nu = 1\n");
    let o = run("certify", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Hessian"), "{}", stderr(&o));
}

fn profile_rows(path: &Path) -> (Vec<Vec<String>>, String) {
    let text = std::fs::read_to_string(path).unwrap();
    let rows = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    let verdict = text
        .lines()
        .find_map(|l| l.strip_prefix("# verdict: "))
        .unwrap()
        .to_string();
    (rows, verdict)
}

#[test]
fn saddle_levelset_ratio_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.conf", "[potential]\nname = saddle\n[initial]\nu = 0, 1\n");
    let out = tmp.path().join("out");
    let o = run("levelset", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (rows, verdict) = profile_rows(&out.join("psi_profile.csv"));
    assert_eq!(verdict, "bounded");
    for r in &rows {
        let ratio: f64 = r[2].parse().unwrap();
        assert!((ratio - 2.0).abs() <= 0.1, "ratio {ratio}");
    }
}

#[test]
fn nonsmooth_levelset_unbounded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "ns.conf", "[potential]\nname = nonsmooth_32\n[initial]\nu = 1\n");
    let out = tmp.path().join("out");
    let o = run("levelset", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(profile_rows(&out.join("psi_profile.csv")).1, "unbounded");
}

#[test]
fn quadratic_rates_exponential() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.conf", QUADRATIC);
    let out = tmp.path().join("out");
    let o = run("rates", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = json(&out.join("rate_report.json"));
    assert_eq!(rep["empirical_law"]["law"]["law"], "Exponential", "{rep}");
    assert!(out.join("rate_summary.csv").is_file());
}

#[test]
fn simulate_toggles_produce_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{QUADRATIC}[analysis]\ncertify = true\nlevelset = true\nrates = true\n");
    let cfg = write_config(tmp.path(), "q.conf", &body);
    let out = tmp.path().join("out");
    let o = run("simulate", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trajectory.csv", "run.json", "certificate.json", "psi_profile.csv", "rate_report.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn batch_and_report_merge_rows() {
    let tmp = TempDir::new().unwrap();
    let cfgs = tmp.path().join("cfgs");
    std::fs::create_dir(&cfgs).unwrap();
    write_config(&cfgs, "a.conf", QUADRATIC);
    write_config(&cfgs, "b.conf", "[potential]\nname = neg_quadratic\n[initial]\nu = 0.5\n");
    let root = tmp.path().join("runs");
    let pattern = format!("{}/*.conf", cfgs.display());
    let o = qgrad(&["rates", "--batch", &pattern, "--out", root.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(root.join("a/rate_report.json").is_file());
    assert!(root.join("b/rate_report.json").is_file());

    let o = qgrad(&["report", "--out", root.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = std::fs::read_to_string(root.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "potential,gamma,classification,theta_hat,law,param,envelope_automaj,envelope_majgrad1"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("quadratic,1,Converged"));
    assert!(lines[2].starts_with("neg_quadratic,1,Escaped"));
}

#[test]
fn report_without_inputs_fails() {
    let tmp = TempDir::new().unwrap();
    let o = qgrad(&["report", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_override_changes_certificate_and_reruns_are_identical() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{QUADRATIC}[analysis]\ncertify = true\nlevelset = true\nrates = true\n");
    let cfg = write_config(tmp.path(), "q.conf", &body);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("simulate", &cfg, &a).status.code(), Some(0));
    assert_eq!(run("simulate", &cfg, &b).status.code(), Some(0));
    for f in ["trajectory.csv", "run.json", "certificate.json", "psi_profile.csv", "rate_report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = tmp.path().join("c");
    let o = qgrad(&["certify", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "99", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&c.join("certificate.json"))["seed"], 99);
}

#[test]
fn config_and_batch_together_is_an_error() {
    let o = qgrad(&["simulate", "--config", "x.conf", "--batch", "*.conf"]);
    assert_eq!(o.status.code(), Some(1));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn reinfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reinfer")).args(args).output().expect("binary runs")
}

fn linear_csv(dir: &Path) -> PathBuf {
    let p = dir.join("data.csv");
    let mut s = String::from("y,x\n");
    for i in 0..150 {
        let x = (i as f64 * 0.37).sin() * 1.5;
        let e = (i as f64 * 1.91).cos() * 0.8;
        s.push_str(&format!("{},{}\n", 1.0 + 0.5 * x + e, x));
    }
    fs::write(&p, s).unwrap();
    p
}

fn fit_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["fit", "--data", data, "--regressors", "const,x", "--out", out, "-B", "200", "--seed", "9"]
}

#[test]
fn fit_writes_schema_stable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = linear_csv(dir.path());
    let out = dir.path().join("fit");
    let o = reinfer(&fit_args(data.to_str().unwrap(), out.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "coefficient,estimate,se,ci_lo,ci_hi,autocorr1,method");
    assert_eq!(report.lines().count(), 3);
    let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().next().unwrap(), "b,phase,theta_const,theta_x");
    // 50 burn-in iterates plus 200 draws
    assert_eq!(draws.lines().count(), 251);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    for key in ["config", "failure_log", "wall_time_ms"] {
        assert!(diag.get(key).is_some(), "{key}");
    }
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["method"], "rqn");
    assert_eq!(rep["config"]["burn"], 50);
}

#[test]
fn fit_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = linear_csv(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(reinfer(&fit_args(data.to_str().unwrap(), a.to_str().unwrap())).status.success());
    assert!(reinfer(&fit_args(data.to_str().unwrap(), b.to_str().unwrap())).status.success());
    let echo = a.join("report.json");
    assert!(reinfer(&["fit", "--config", echo.to_str().unwrap(), "--out", c.to_str().unwrap()]).status.success());
    let read = |p: &Path| fs::read(p.join("draws.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
}

#[test]
fn too_few_draws_is_a_config_exit() {
    let dir = tempfile::tempdir().unwrap();
    let data = linear_csv(dir.path());
    let out = dir.path().join("fit");
    let o = reinfer(&["fit", "--data", data.to_str().unwrap(), "--regressors", "const,x", "--out", out.to_str().unwrap(), "-B", "5"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["category"], "insufficient_draws");
    let diag = fs::read_to_string(out.join("diagnostics.json")).unwrap();
    assert!(diag.contains("insufficient_draws"));
}

#[test]
fn divergence_is_a_numerical_exit() {
    let dir = tempfile::tempdir().unwrap();
    let data = linear_csv(dir.path());
    let out = dir.path().join("fit");
    let o = reinfer(&[
        "fit", "--data", data.to_str().unwrap(), "--regressors", "const,x^8", "--out", out.to_str().unwrap(),
        "--method", "rgd", "--gamma", "1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_keys_and_methods_are_rejected() {
    assert_eq!(reinfer(&["fit", "--set", "gama=0.2"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let data = linear_csv(dir.path());
    let o = reinfer(&["fit", "--data", data.to_str().unwrap(), "--regressors", "const,x", "--method", "newton", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_boot_and_dmk_agree_on_ols() {
    let dir = tempfile::tempdir().unwrap();
    let data = linear_csv(dir.path());
    let out = dir.path().join("cmp");
    let o = reinfer(&[
        "compare", "--data", data.to_str().unwrap(), "--regressors", "const,x", "--out", out.to_str().unwrap(),
        "-B", "100", "--methods", "boot,dmk,rnr",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |m: &str| -> Vec<Vec<f64>> {
        fs::read_to_string(out.join(format!("draws_{m}.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (a, b) = (read("boot"), read("dmk"));
    assert_eq!(a.len(), 100);
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() < 1e-10);
        }
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| l.ends_with(",rnr")).count(), 2);
}

#[test]
fn check_passes_for_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let o = reinfer(&["check", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(!text.contains("FAIL"), "{text}");
    assert_eq!(text.matches(" ok").count(), 6);
}

#[test]
fn saddle_demo_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = reinfer(&["saddle-demo", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("saddle.json")).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let nr0 = rows[0]["nr_theta"].as_array().unwrap();
    assert!(nr0.iter().all(|x| x.as_f64().unwrap().abs() < 0.1));
    assert!(rows.iter().all(|r| r["rnr_escape_rate"].as_f64().unwrap() >= 0.9));
}

#[test]
fn saddle_demo_with_positive_definite_hessian() {
    let dir = tempfile::tempdir().unwrap();
    let o = reinfer(&["saddle-demo", "--out", dir.path().to_str().unwrap(), "--set", "saddle.h=[1,2]", "--set", "saddle.noise_sd=0"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("saddle.json")).unwrap()).unwrap();
    for r in v["rows"].as_array().unwrap() {
        for key in ["nr_theta", "rnr_theta"] {
            assert!(r[key].as_array().unwrap().iter().all(|x| x.as_f64().unwrap().abs() < 0.05), "{r}");
        }
        assert_eq!(r["rnr_escape_rate"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn mc_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = reinfer(&["mc", "--out", dir.path().to_str().unwrap(), "--replications", "4", "-B", "100", "--method", "rnr"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "coefficient,truth,mean,sd,bias,reject_quantile,reject_se");
    assert_eq!(csv.lines().count(), 4);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["summary"]["completed"], 4);
}

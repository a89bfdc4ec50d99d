use std::path::Path;
use std::process::{Command, Output};

fn psilap(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_psilap"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn report(path: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn get(rep: &[(String, String)], key: &str) -> String {
    rep.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("missing {key}")).1.clone()
}

const CLASSICAL: &str = "grid.n = 129\nproblem.p = 2\nproblem.alpha = 1\nnonlinearity.id = affine\nnonlinearity.c = 1\n";

#[test]
fn classical_solve_writes_parabola() {
    let d = tempfile::tempdir().unwrap();
    let out = psilap(d.path(), CLASSICAL, &["solve", "--out", "sol.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(d.path().join("sol.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("xi,psi_xi,phi"));
    let peak = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!((peak - 0.125).abs() < 1e-6, "{peak}");
    assert!(d.path().join("sol.report").exists());
    assert!(d.path().join("sol_trace.csv").exists());
    let rep = report(&d.path().join("sol.report"));
    let c: f64 = get(&rep, "critical_level_c").parse().unwrap();
    assert!((c + 1.0 / 24.0).abs() < 1e-4);
}

#[test]
fn default_output_path_uses_label() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{CLASSICAL}run.label = demo\nrun.out_dir = res\n");
    let out = psilap(d.path(), &cfg, &["solve"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(d.path().join("res/demo_solve.csv").exists());
    assert!(d.path().join("res/demo_solve.report").exists());
}

#[test]
fn order_below_one_over_p_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let out = psilap(d.path(), "problem.p = 2\nproblem.alpha = 0.4\n", &["solve", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!d.path().join("x.csv").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let out = psilap(d.path(), "solver.tolerance = 1e-6\n", &["solve", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn iteration_cap_fails_but_writes_traces() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{CLASSICAL}solver.max_iter = 1\nsolver.newton_polish = false\n");
    let out = psilap(d.path(), &cfg, &["solve", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(d.path().join("x_trace.csv").exists());
    assert_eq!(get(&report(&d.path().join("x.report")), "converged"), "false");
}

#[test]
fn eigen_level_one_and_bad_level() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "grid.T = 3.141592653589793\ngrid.n = 129\nproblem.p = 2\nproblem.alpha = 1\n";
    let out = psilap(d.path(), cfg, &["eigen", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let lam: f64 = get(&report(&d.path().join("e.report")), "lambda").parse().unwrap();
    assert!((lam - 1.0).abs() < 1e-3, "{lam}");
    let out = psilap(d.path(), cfg, &["eigen", "--level", "3", "--out", "e3.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eigen_sweep_over_beta() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "grid.n = 65\nproblem.p = 2\nproblem.alpha = 0.8\n";
    let out = psilap(d.path(), cfg, &["eigen", "--sweep", "beta=0:1:0.5", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(d.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("alpha,beta,p,lambda,residual,converged"));
    assert_eq!(text.lines().count(), 4);
    let out = psilap(d.path(), cfg, &["eigen", "--sweep", "gamma=0:1:0.5", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_requires_epsilon() {
    let d = tempfile::tempdir().unwrap();
    let out = psilap(d.path(), "nonlinearity.id = linear\nnonlinearity.lambda = 1\n", &["check", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn check_rejects_unknown_theorem() {
    let d = tempfile::tempdir().unwrap();
    let out = psilap(d.path(), "hypothesis.epsilon = 0.5\n", &["check", "--theorem", "2.1", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ibp_test_with_one_level_fails() {
    let d = tempfile::tempdir().unwrap();
    let out = psilap(d.path(), "problem.alpha = 0.5\nibp.levels = 8\n", &["ibp-test", "--out", "i.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn converge_power_rule_reports_order() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "problem.alpha = 0.5\nconverge.case = power_rule\n";
    let out = psilap(d.path(), cfg, &["converge", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let p: f64 = get(&report(&d.path().join("c.report")), "p_obs").parse().unwrap();
    assert!(p >= 1.8, "{p}");
}

#[test]
fn dump_weights_writes_long_format() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "grid.n = 9\nproblem.alpha = 0.75\n";
    let out = psilap(d.path(), cfg, &["eigen", "--dump-weights", "w.csv", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(d.path().join("w.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("row,col,weight"));
    // lower triangle, first row empty
    assert!(text.lines().count() > 9);
}

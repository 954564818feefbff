use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use isq_lab::config::DEFAULT_CONFIG;

fn isq(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isq"))
        .args(args)
        .env("ISQ_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bounds_report_has_finite_constant_and_intermediates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k4.toml");
    fs::write(&cfg, DEFAULT_CONFIG.replace("r = [1.0, 2.0]", "r = [2.0]")).unwrap();
    let o = isq(&["bounds", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    let rep = &doc["report"][0];
    for key in ["c1", "a_r", "b_r", "d_r", "stationary_residual", "z_r", "h_r", "chi_r", "varpi", "m_r"] {
        let v = rep[key].as_f64().unwrap_or(f64::NAN);
        assert!(v.is_finite() && v > 0.0, "{key} = {v}");
    }
    assert_eq!(rep["r"].as_f64(), Some(2.0));
    assert_eq!(doc["provenance"]["envelope.K"], "4");
    let curve = fs::read_to_string(dir.path().join("bound_curve_r2.csv")).unwrap();
    assert!(curve.lines().any(|l| l == "t,bound"));
    assert_eq!(curve.lines().filter(|l| !l.starts_with('#')).count(), 130);
}

#[test]
fn dominate_reports_zero_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = isq(&["dominate", "--reps", "200"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("violations=0"), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("domination.csv")).unwrap();
    assert!(csv.contains("# flags=--reps=200\n"));
    assert!(csv.contains("# family=state-modulated\n"));
}

#[test]
fn identical_config_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "couple", "mg-analytics"] {
        let args = [cmd, "--reps", "200", "--horizon", "50", "--seed", "5"];
        assert_eq!(isq(&args, a.path()).status.code(), Some(0), "{cmd}");
        assert_eq!(isq(&args, b.path()).status.code(), Some(0), "{cmd}");
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 7, "{names:?}");
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let c = tempfile::tempdir().unwrap();
    isq(&["simulate", "--reps", "200", "--horizon", "50", "--seed", "6"], c.path());
    assert_ne!(
        fs::read(a.path().join("cycles.csv")).unwrap(),
        fs::read(c.path().join("cycles.csv")).unwrap()
    );
}

#[test]
fn tv_check_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = isq(&["tv-check", "--reps", "500"], dir.path());
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    let tv = fs::read_to_string(dir.path().join("tv.csv")).unwrap();
    assert!(tv.contains("t,tv,half_width,bound_r1,bound_r2,nonincreasing"));
}

#[test]
fn config_errors_exit_with_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, DEFAULT_CONFIG.replace("horizon = 100.0", "horizon = \"long\"")).unwrap();
    let o = isq(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("horizon") && err.contains("line"), "{err}");

    fs::write(&cfg, DEFAULT_CONFIG.replace("K = 4.0\nlambda0 = 0.5\nLambda = 1.0\n\n[run]", "K = 2.0\nlambda0 = 0.5\nLambda = 1.0\n\n[run]")).unwrap();
    let o = isq(&["bounds", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[envelope]"));
}

#[test]
fn verify_passes_on_shipped_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = isq(&["verify"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(report.contains("criterion,name,check,observed,relation,reference,slack,passed"));
    assert!(!report.contains(",false\n"));
}

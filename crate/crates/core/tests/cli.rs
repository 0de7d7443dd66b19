//! Black-box runs of the `corotfsi` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corotfsi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn self_check_passes() {
    let o = run(&["self-check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().count() >= 8);
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = "Nx = 16\nt_max = 0.02\neps = 0.2\npreset = random-seeded\nseed = 5\ncadence = 5\n";
    let cfg = write_cfg(dir.path(), "run.cfg", body);
    let mut files = Vec::new();
    let out = dir.path().join("out");
    for _ in 0..2 {
        let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(fs::read(out.join("timeseries.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    // config echo, header, then t = 0 and four samples
    assert!(text.lines().any(|l| l.starts_with("# ") && l.contains("Nx = 16")));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("t,norm_T_L2"));
    assert_eq!(rows.len(), 1 + 5);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "Nx = 16\nt_max = 0.01\neps = 0.1\nLx = 1\nLy = 1\n",
        "Nx = 16\nt_max = 0.01\n",
        "Nx = 16\nt_max = 0.01\neps = 0.1\nlambda = 5\n",
        "Nx = 16\nt_max = 0.01\neps = 0.1\nbogus = 3\n",
    ];
    for (k, body) in cases.iter().enumerate() {
        let cfg = write_cfg(dir.path(), &format!("bad{k}.cfg"), body);
        let o = run(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {k}: {}", stderr(&o));
        assert!(stderr(&o).contains("kind=config exit=2"), "case {k}: {}", stderr(&o));
    }
}

#[test]
fn degenerate_shell_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = "Nx = 16\nt_max = 0.01\neps = 0.1\npreset = shell-mode\nshell_amplitude = 0.39\n";
    let cfg = write_cfg(dir.path(), "deg.cfg", body);
    let o = run(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("kind=degeneracy"));
}

#[test]
fn decay_writes_verdict_and_envelopes() {
    let dir = tempfile::tempdir().unwrap();
    let body = "Nx = 16\nt_max = 0.2\neps = 0.5\nstress_offset = 1, 0, 0.5\ncadence = 20\n";
    let cfg = write_cfg(dir.path(), "decay.cfg", body);
    let o = run(&["decay", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let verdict = fs::read_to_string(dir.path().join("decay_verdict.txt")).unwrap();
    assert!(verdict.contains("stress envelope (gating, tol 2e-2): PASS"), "{verdict}");
    let csv = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.contains("env_T") && header.ends_with("pass_u"), "{header}");
}

#[test]
fn single_eps_sweep_reports_missing_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let body = "Nx = 16\nt_max = 0.01\neps = 0.1\ncadence = 5\nstress_offset = 1, 0, 0\n";
    let cfg = write_cfg(dir.path(), "sweep.cfg", body);
    let o = run(&["sweep-eps", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--eps-list", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("slope_T = unavailable"));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(last.ends_with("NA,NA"), "{last}");
}

#[test]
fn closure_check_stays_close_to_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let body = "Nx = 16\nt_max = 0.2\nlambda = 1\nNq = 32\nkinetic_dt = 2e-3\n";
    let cfg = write_cfg(dir.path(), "closure.cfg", body);
    let o = run(&["closure-check", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("closure.csv")).unwrap();
    assert!(csv.lines().filter(|l| !l.starts_with('#')).count() > 3);
}

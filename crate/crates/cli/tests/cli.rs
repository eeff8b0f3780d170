use std::path::Path;
use std::process::{Command, Output};

fn ksns(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksns"))
        .args(args)
        .current_dir(cwd)
        .env("KSNS_WORKERS", "1")
        .output()
        .unwrap()
}

const SMALL_RUN: &str = "\
grid.cells = 12
params.kappa = 1
time.t_end = 0.02
init.kind = gaussian
init.amplitude = 2
init.background = 0.1
output.every = 2
";

#[test]
fn simulate_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), SMALL_RUN).unwrap();
    let out = ksns(&["simulate", "run.cfg", "--out", "out"], dir.path());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(0), "{stderr}");
    assert!(stderr.contains("default: "));
    let out_dir = dir.path().join("out");
    assert!(out_dir.join("diagnostics.csv").is_file());
    assert!(out_dir.join("report.json").is_file());
    assert!(out_dir.join("snapshots/step_0.bin").is_file());

    let verify = ksns(&["verify-snapshot", "out/snapshots/step_0.bin"], dir.path());
    assert_eq!(verify.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&verify.stdout).unwrap();
    assert_eq!(summary["step"], 0);
    assert_eq!(summary["cells"], serde_json::json!([12, 12]));
}

#[test]
fn blowup_halt_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_RUN}run.sup_ceiling = 0.5\n");
    std::fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let out = ksns(&["simulate", "run.cfg", "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "params.alpha = -1\ninit.kind = uniform\ninit.n = -0.5\n").unwrap();
    let out = ksns(&["simulate", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("α ≥ 0"), "{stderr}");
    assert!(stderr.contains("nonnegativity"), "{stderr}");
    assert!(stderr.contains("time.t_end"), "{stderr}");
}

#[test]
fn sweep_writes_one_directory_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_RUN}sweep.alpha = 0.5, 1\nsweep.eps = 0, 0.1\n");
    std::fs::write(dir.path().join("sweep.cfg"), cfg).unwrap();
    let out = ksns(&["sweep", "sweep.cfg", "--out", "sw"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sw/sweep.json")).unwrap()).unwrap();
    assert_eq!(report["entries"].as_array().unwrap().len(), 4);
    let subdirs = std::fs::read_dir(dir.path().join("sw")).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(subdirs, 4);
}

#[test]
fn exponent_report_is_exact_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksns(&["check-exponents", "--samples", "12"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["p"], "13/8");
    assert_eq!(report["critical_alpha_3d"], "1/3");
    let samples = report["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 12);
    assert_eq!(samples.last().unwrap()["alpha"], "3/4");
    let all = report["all_feasible"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if all { 0 } else { 1 }));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = "name = smoke
grid.dim = 1
grid.cells = 64
kernel.family = stretched
kernel.a = 0.25
kernel.p = 0.5
exponent.p = 3
alpha = 0
time.dt = 0.01
time.horizon = 2
init.u0 = 5*sin(pi*x)
init.u1 = 0
";

fn viscowave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viscowave"))
        .args(args)
        .env("VISCOWAVE_OUT", dir.join("out"))
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "ok.cfg",
        &format!("{BASE}verify = energy, thm_3_2\n"),
    );
    let out = viscowave(tmp.path(), &["run", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("out/smoke");
    for f in [
        "energy.csv",
        "diagnostics.csv",
        "verdicts.json",
        "meta.json",
        "plot.gp",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let energy = fs::read_to_string(dir.join("energy.csv")).unwrap();
    assert!(energy.starts_with(
        "t,kinetic,elastic,memory,log_term,modular,energy,aux_energy,lambda,bound_thm_3_2\n"
    ));
    assert_eq!(energy.lines().count(), 202);
    let verdicts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(verdicts["checks"][0]["id"], "energy");
    assert_eq!(verdicts["checks"][0]["status"], "pass");
}

#[test]
fn strict_mode_reports_failed_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    // E t^p e > 1 on the tail, so no k e^{-k t^p} dominates
    let cfg = write_cfg(tmp.path(), "fail.cfg", &format!("{BASE}verify = example\n"));
    assert_eq!(viscowave(tmp.path(), &["run", &cfg]).status.code(), Some(0));
    assert_eq!(
        viscowave(tmp.path(), &["run", &cfg, "--strict"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn validation_errors_name_the_offending_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            "a1.cfg",
            BASE.replace("kernel.a = 0.25", "kernel.a = 1.5"),
            "`kernel`: violates A1",
        ),
        (
            "cfl.cfg",
            BASE.replace("time.dt = 0.01", "time.dt = 0.1"),
            "`time.dt`: 0.1 exceeds the CFL limit",
        ),
        (
            "key.cfg",
            format!("{BASE}bogus.key = 1\n"),
            "`bogus.key`: unknown key",
        ),
    ];
    for (name, text, message) in cases {
        let cfg = write_cfg(tmp.path(), name, &text);
        let out = viscowave(tmp.path(), &["run", &cfg]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains(message),
            "{name}"
        );
    }
    let missing = tmp.path().join("missing.cfg");
    assert_eq!(
        viscowave(tmp.path(), &["run", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn kernel_check_and_sweep_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "k.cfg",
        &format!("{BASE}verify = energy\nsweep.alpha = 0, 0.01\n"),
    );
    let out = viscowave(tmp.path(), &["kernel", "check", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let out = viscowave(tmp.path(), &["sweep", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("out/smoke/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().next().unwrap().starts_with("cell,alpha,status"));
}

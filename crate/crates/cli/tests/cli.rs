use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gradflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradflow"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("GRADFLOW_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ode_writes_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradflow(&["ode", "--n", "20", "--precision", "f64"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("grid,numeric,analytic\n"));
    assert_eq!(csv.lines().count(), 21);
    assert!(dir.path().join("trace.csv").exists());
    let svg = fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.contains("<polyline"));
    let line = stdout(&out);
    assert!(
        line.contains("final_loss=")
            && line.contains("max_abs_error=")
            && line.contains("runtime=")
    );
}

#[test]
fn ode_f32_overflow_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradflow(&["ode", "--n", "30", "--precision", "f32"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn gradcheck_rows_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradflow(&["gradcheck"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 22);
    assert!(rows.iter().all(|r| r.ends_with(",true")), "{text}");
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["catenary", "--n", "20", "--steps", "300", "--seed", "7"];
    assert!(gradflow(&args, a.path()).status.success());
    assert!(gradflow(&args, b.path()).status.success());
    for file in ["solution.csv", "trace.csv"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |seed: Option<&str>, dir: &Path| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gradflow"));
        cmd.args(["catenary", "--n", "10", "--steps", "5", "--out-dir"])
            .arg(dir);
        match seed {
            Some(s) => cmd.env("GRADFLOW_SEED", s),
            None => cmd.env_remove("GRADFLOW_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        fs::read(dir.join("solution.csv")).unwrap()
    };
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let env_seed = run(Some("9"), dirs[0].path());
    let flag_seed = {
        let out = gradflow(
            &["catenary", "--n", "10", "--steps", "5", "--seed", "9"],
            dirs[1].path(),
        );
        assert!(out.status.success());
        fs::read(dirs[1].path().join("solution.csv")).unwrap()
    };
    let default_seed = run(None, dirs[2].path());
    assert_eq!(env_seed, flag_seed);
    assert_ne!(env_seed, default_seed);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["ode", "--bogus"][..],
        &["ode", "--n", "5"],
        &["catenary", "--l0", "0.5"],
        &["ode", "--s0", "-1"],
        &["ode", "--shrink", "1.5"],
        &["ode", "--precision", "f16"],
        &["catenary", "--steps", "0"],
        &["frobnicate"],
    ] {
        let out = gradflow(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradflow(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("catenary"));
}

#[test]
fn out_dir_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b");
    let out = gradflow(&["bench", "--n", "3", "--steps", "50"], &nested);
    assert!(out.status.success());
    assert!(nested.join("trace.csv").exists());
}

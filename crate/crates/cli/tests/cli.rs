use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ebt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebt"))
        .args(args)
        .env_remove("EBT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_three_measures_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = ebt(&["simulate", "--problem", "example1", "--dt", "0.1", "--T", "1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["male.csv", "female.csv", "couples.csv", "manifest.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    assert!(stdout(&o).contains("couples"));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"variant\": \"simplified\""));
}

#[test]
fn step_larger_than_a0_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = ebt(&["simulate", "--dt", "0.2", "--a0", "0.1", "--out", path(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("dt exceeds a0"));
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ebt"))
        .args(["simulate", "--dt", "0.1", "--T", "0.2", "--format", "json"])
        .env("EBT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("couples.json").is_file());
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let from_file = dir.path().join("file");
    let from_flag = dir.path().join("flag");
    fs::write(&cfg, format!("# short run\nT = 0.2\ndt = 0.1\nout = {}\n", path(&from_file))).unwrap();
    assert!(ebt(&["simulate", "--config", path(&cfg)]).status.success());
    assert!(from_file.join("male.csv").is_file());
    let o = ebt(&["simulate", "--config", path(&cfg), "--out", path(&from_flag), "--dt", "0.05"]);
    assert!(o.status.success());
    let manifest = fs::read_to_string(from_flag.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"dt\": 0.05"));

    fs::write(&cfg, "dt 0.1\n").unwrap();
    assert!(!ebt(&["simulate", "--config", path(&cfg)]).status.success());
}

#[test]
fn convergence_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ebt(&[
            "convergence", "--problem", "example2", "--T", "0.5", "--rows", "2", "--jobs", "1", "--out", path(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("err_tv"));
        fs::read_to_string(out.join("table.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a.lines().count(), 3);
    assert!(a.starts_with("dt,err_flat,err_tv,q\n"));
    assert_eq!(a, run("b"));
}

#[test]
fn distances_between_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let d0 = write("d0.csv", "x,weight\n0,1\n");
    let d1 = write("d1.csv", "x,weight\n1,1\n");
    let plane = write("p.csv", "x,y,weight\n0,0,1\n");

    let o = ebt(&["distance", path(&d0), path(&d0)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("flat 0.000000000000e0"), "{}", stdout(&o));

    let o = ebt(&["distance", path(&d0), path(&d1), "--metric", "w1"]);
    assert!(stdout(&o).starts_with("w1 1.000000000000e0"), "{}", stdout(&o));

    let o = ebt(&["distance", path(&d0), path(&d1), "--sandwich", "1"]);
    let text = stdout(&o);
    assert!(text.contains("flat in [3.333333333333e-1, 1.000000000000e0]"), "{text}");
    assert!(text.contains("flat 1.000000000000e0"), "{text}");

    let o = ebt(&["distance", path(&d0), path(&plane)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("dimension mismatch"));
    let o = ebt(&["distance", path(&d0), path(&dir.path().join("missing.csv"))]);
    assert!(!o.status.success());
}

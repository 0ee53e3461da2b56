use std::path::Path;
use std::process::{Command, Output};

fn jjchar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jjchar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn simulate(dir: &Path, preset: &str, format: &str) {
    let o = jjchar(&[
        "simulate",
        "--preset",
        preset,
        "--format",
        format,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&jjchar(&["--help"])), 0);
    assert_eq!(code(&jjchar(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&jjchar(&[])), 1);
    assert_eq!(code(&jjchar(&["analyze", "everything", "x.jjd"])), 1);
    assert_eq!(code(&jjchar(&["simulate", "--preset", "nope"])), 1);
}

#[test]
fn missing_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jjd");
    assert_eq!(code(&jjchar(&["analyze", "all", missing.to_str().unwrap()])), 3);
}

#[test]
fn malformed_dataset_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jjd");
    std::fs::write(&path, "jjchar-dataset 1\nnot a record\n").unwrap();
    let o = jjchar(&["analyze", "all", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn invalid_flag_value_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "ref", "text");
    let f = dir.path().join("ref.jjd");
    assert_eq!(
        code(&jjchar(&[
            "analyze",
            "all",
            f.to_str().unwrap(),
            "--jump-factor",
            "0.5"
        ])),
        1
    );
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "etch20", "json");
    simulate(b.path(), "etch20", "json");
    for name in ["etch20.json", "etch20.truth.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap()
        );
    }
}

#[test]
fn seed_changes_the_dataset() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "ref", "text");
    let o = jjchar(&[
        "simulate",
        "--preset",
        "ref",
        "--seed",
        "99",
        "--out",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_ne!(
        std::fs::read(a.path().join("ref.jjd")).unwrap(),
        std::fs::read(b.path().join("ref.jjd")).unwrap()
    );
}

#[test]
fn report_writes_table_and_grids() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "ref", "text");
    simulate(dir.path(), "etch30", "json");
    let out = dir.path().join("out");
    let o = jjchar(&[
        "report",
        dir.path().join("ref.jjd").to_str().unwrap(),
        dir.path().join("etch30.json").to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"label\": \"etch30\""));
    assert!(out.join("ref_vbt.csv").exists());
    assert!(out.join("ref_vbt.csv.meta.json").exists());
    assert!(out.join("etch30_cap_50um2.csv").exists());
}

#[test]
fn analysis_failure_exits_two_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "etch10", "text");
    let out = dir.path().join("out");
    // No reference wafer and no permittivity: the thickness is unavailable.
    let o = jjchar(&[
        "analyze",
        "all",
        dir.path().join("etch10.jjd").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("t_ox     null nm"));
    assert!(text.contains("RA       11."));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "etch10", "text");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "eps_r = 5.0\n[stages]\nres = false\n").unwrap();
    let file = dir.path().join("etch10.jjd");
    let run = |extra: &[&str]| {
        let mut args = vec![
            "analyze",
            "cap",
            file.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--format",
            "json",
        ];
        args.extend_from_slice(extra);
        let o = jjchar(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let from_file = run(&[]);
    let from_flag = run(&["--eps-r", "9.938799792882566"]);
    assert!(from_file.contains("\"configured\""));
    let t = |s: &str| -> f64 {
        let v: serde_json::Value = serde_json::from_str(s).unwrap();
        v[0]["t_ox"]["value"].as_f64().unwrap()
    };
    assert!((t(&from_flag) / t(&from_file) - 9.938799792882566 / 5.0).abs() < 1e-9);
    assert!((t(&from_flag) - 3.5).abs() < 0.05);
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "ref", "text");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "epsilon = 5.0\n").unwrap();
    let o = jjchar(&[
        "analyze",
        "all",
        dir.path().join("ref.jjd").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn spec_file_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("w.json");
    let truth_dir = tempfile::tempdir().unwrap();
    simulate(truth_dir.path(), "etch30", "text");
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(truth_dir.path().join("etch30.truth.json")).unwrap()).unwrap();
    let mut s = truth["spec"].clone();
    s["label"] = "custom".into();
    std::fs::write(&spec, serde_json::to_string(&s).unwrap()).unwrap();
    let o = jjchar(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("custom.jjd").exists());
}

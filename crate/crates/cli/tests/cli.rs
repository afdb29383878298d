use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qsd(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .env("QSD_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_FIG5: &str = "scenario = \"fig5\"\n[params]\ndim = 6\nt_final = 0.2\nrecord_stride = 50\nleak_check = false\n";

#[test]
fn lists_every_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(&["list-scenarios"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["fig1", "fig2", "fig3", "fig4", "fig5", "kaos"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn run_writes_into_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL_FIG5).unwrap();
    let out = qsd(
        &["run", "--config", cfg.to_str().unwrap(), "--seed", "3"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let file = dir.path().join("fig5-trajectory.csv");
    let text = fs::read_to_string(&file).unwrap();
    assert!(text.contains("# seed: 3\n"));
    assert!(text.contains("# version: v"));
    let summary: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["rows"], 5);
    assert_eq!(summary["seed"], 3);
}

#[test]
fn ensemble_reports_oracle_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL_FIG5).unwrap();
    let out = qsd(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--trajectories",
            "30",
            "--compare-oracle",
            "--format",
            "json-lines",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["mode"], "ensemble");
    assert!(summary["max_trace_distance"].as_f64().unwrap() < 0.5);
    let text = fs::read_to_string(dir.path().join("fig5-ensemble.jsonl")).unwrap();
    assert!(text.starts_with("{\"meta\""));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL_FIG5).unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("ens{k}.csv"));
        let out = qsd(
            &[
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--trajectories",
                "20",
                "--out",
                path.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        files.push(fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn classical_and_oracle_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(
        &[
            "classical",
            "kaos",
            "--t-final",
            "29.7",
            "--discard-periods",
            "5",
            "--beta",
            "10",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("kaos-classical.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    // 29.7 time units are 30 periods of 0.99 at β = 10.
    assert_eq!(rows, 25);

    let cfg = dir.path().join("oracle.toml");
    fs::write(&cfg, SMALL_FIG5).unwrap();
    let out = qsd(&["oracle", "-c", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("fig5-oracle.csv").exists());
}

#[test]
fn errors_report_category_and_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"kaos\"\n[params]\ntua1 = 5.0\n").unwrap();
    let out = qsd(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("error [parse]"), "{err}");
    assert!(err.contains("line 3"), "{err}");

    let out = qsd(&["poincare", "fig2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error [config]"));

    let out = qsd(&["run", "fig1", "--format", "xml"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn validate_runs_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(&["validate", "7"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("PASS [ 7]"), "{text}");
}

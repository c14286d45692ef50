//! End-to-end tests of the `qflow` binary: exit codes, artifact layout,
//! determinism, and the report/sweep/verify contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE_CFG: &str = "\
[shape]
kind = ellipse
a = 1.3
b = 1.0
resolution = 64

[law]
n = 1
k = 1
alpha = 1

[flow]
t_end = 0.4
volume_correct = true
snapshot_stride = 8
";

fn qflow(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(args)
        .env("QFLOW_OUTPUT_ROOT", root)
        .output()
        .expect("spawn qflow")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();

    // Malformed line.
    let cfg = write_cfg(root, "bad.cfg", "[shape]\nkind = ellipse\noops\n");
    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    // Domain constraint: alpha must be positive.
    let cfg = write_cfg(
        root,
        "alpha.cfg",
        &BASE_CFG.replace("alpha = 1", "alpha = 0"),
    );
    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("alpha > 0 required"),
        "{}",
        stderr(&out)
    );

    // Missing file.
    let out = qflow(root, &["run", root.join("nope.cfg").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // A list-valued key makes `run` refuse and point at `sweep`.
    let cfg = write_cfg(
        root,
        "list.cfg",
        &BASE_CFG.replace("alpha = 1", "alpha = 0.5, 1"),
    );
    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sweep"), "{}", stderr(&out));

    // An empty value list is rejected at parse time.
    let cfg = write_cfg(root, "empty.cfg", &BASE_CFG.replace("alpha = 1", "alpha ="));
    let out = qflow(root, &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("empty value list"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_writes_the_full_artifact_set_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let cfg = write_cfg(root, "ellipse.cfg", BASE_CFG);

    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("stop = time_reached"));

    let dir = root.join("ellipse");
    for name in [
        "run_config.cfg",
        "series.csv",
        "series_coarse.csv",
        "audits.json",
        "snapshots.txt",
        "snapshots.svg",
        "summary.txt",
    ] {
        assert!(dir.join(name).exists(), "missing {name}");
    }

    // Re-running without --force refuses; with --force succeeds.
    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
    let first_series = fs::read(dir.join("series.csv")).unwrap();
    let out = qflow(root, &["run", cfg.to_str().unwrap(), "--force"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    // Identical config => bit-identical series.
    let second_series = fs::read(dir.join("series.csv")).unwrap();
    assert_eq!(first_series, second_series, "series.csv not deterministic");
}

#[test]
fn report_regenerates_audits_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let cfg = write_cfg(root, "ellipse.cfg", BASE_CFG);
    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let dir = root.join("ellipse");
    let audits_before = fs::read(dir.join("audits.json")).unwrap();
    let summary_before = fs::read(dir.join("summary.txt")).unwrap();

    let out = qflow(root, &["report", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read(dir.join("audits.json")).unwrap(), audits_before);
    assert_eq!(fs::read(dir.join("summary.txt")).unwrap(), summary_before);
}

#[test]
fn report_on_missing_or_truncated_series() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();

    // Missing directory: usage error.
    let out = qflow(root, &["report", root.join("absent").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("run_config.cfg"),
        "{}",
        stderr(&out)
    );

    // A truncated series must still report, with decay audits n/a.
    let cfg = write_cfg(
        root,
        "conv.cfg",
        &(BASE_CFG.replace("t_end = 0.4", "t_end = 4.0")
            + "\n[audit]\nexpect_convergence = true\n"),
    );
    let out = qflow(root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dir = root.join("conv");
    let series = fs::read_to_string(dir.join("series.csv")).unwrap();
    let truncated: Vec<&str> = series.lines().take(6).collect();
    fs::write(dir.join("series.csv"), truncated.join("\n") + "\n").unwrap();

    let out = qflow(root, &["report", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("audit decay: n/a"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn sweep_expands_cells_and_writes_a_summary() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let cfg = write_cfg(
        root,
        "sweep.cfg",
        &BASE_CFG.replace("alpha = 1", "alpha = 0.5, 1, 2"),
    );
    let out = qflow(root, &["sweep", cfg.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let dir = root.join("sweep");
    for cell in ["law.alpha=0.5", "law.alpha=1", "law.alpha=2"] {
        assert!(dir.join(cell).join("series.csv").exists(), "missing {cell}");
        assert!(dir.join(cell).join("audits.json").exists());
    }
    let summary = fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 4, "header + one row per cell:\n{summary}");
    assert!(lines[0].starts_with("cell,law.alpha,exit,stop,"));
    assert!(lines[0].contains("fit_slope"));
    assert!(lines[0].contains("all_pass"));
    assert!(lines[1].starts_with("law.alpha=0.5,0.5,0,"));

    // Refusing to clobber without --force.
    let out = qflow(root, &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_suites_report_seed_and_detect_corruption() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();

    let out = qflow(root, &["verify", "algebra", "--samples", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("seed 271828"), "{text}");
    assert!(text.contains("suite algebra: PASS"), "{text}");

    let out = qflow(
        root,
        &[
            "verify",
            "algebra",
            "--samples",
            "40",
            "--corrupt",
            "sign-error",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "corruption must be detected");
    assert!(stdout(&out).contains("FAIL"), "{}", stdout(&out));

    // --corrupt only makes sense where the algebra checks run.
    let out = qflow(
        root,
        &["verify", "body", "--corrupt", "sign-error"],
    );
    assert_eq!(out.status.code(), Some(2));

    // The body suite prints the grid refinement study with observed orders.
    let out = qflow(root, &["verify", "body", "--samples", "12"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("refinement study"), "{text}");
    assert!(text.contains("observed order"), "{text}");
}

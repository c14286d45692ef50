//! Run execution and artifact management: flows the configured body,
//! audits the trajectory (with the discretization allowance taken from a
//! paired half-resolution companion), and writes output directories
//! atomically — everything lands in a staging directory that is renamed
//! into place only when complete.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use qflow_core::diag::{
    self, AuditContext, AuditReport, DecayExpectations, DiagnosticsRecord, Verdict,
};
use qflow_core::flow::{self, StopReason, Trajectory};
use qflow_core::{make_body, Backend};

use crate::config::{self, Cell, Raw, RunSetup};
use crate::svg;
use crate::CliError;

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

// ---------------------------------------------------------------------------
// Execution

/// Everything one run produces before it is written out.
pub struct RunArtifacts {
    pub trajectory: Trajectory,
    /// Records of the half-resolution companion used for the allowance.
    pub coarse: Option<Vec<DiagnosticsRecord>>,
    pub report: AuditReport,
    /// 0 = completed, audits pass; 1 = completed, some audit failed;
    /// 3 = step failure (partial series).
    pub exit: i32,
}

/// Flows the configured body (and its coarse companion), then audits.
pub fn execute(setup: &RunSetup) -> Result<RunArtifacts, CliError> {
    let body = setup.initial_body().map_err(CliError::from)?;
    let trajectory = flow::run(&body, &setup.flow).map_err(runtime)?;

    let coarse = if setup.paired_coarse {
        let coarse_body = make_body(&setup.shape, setup.backend, setup.resolution / 2)
            .map_err(runtime)?;
        // A companion that fails mid-run still bounds the discretization
        // error over the time range it covered.
        let companion = flow::run(&coarse_body, &setup.flow).map_err(runtime)?;
        Some(companion.records)
    } else {
        None
    };

    let report = audit(setup, &trajectory.records, coarse.as_deref());
    let exit = if trajectory.stop == StopReason::StepFailure {
        3
    } else if report.all_pass {
        0
    } else {
        1
    };
    Ok(RunArtifacts {
        trajectory,
        coarse,
        report,
        exit,
    })
}

/// A stored series only owes convergence if it actually covered the
/// configured horizon: reached t_end, or hit the roundness target. Run and
/// report both use this rule, so regenerated audits are byte-identical.
fn series_complete(setup: &RunSetup, records: &[DiagnosticsRecord]) -> bool {
    let Some(last) = records.last() else {
        return false;
    };
    if last.t >= setup.flow.t_end * (1.0 - 1e-9) {
        return true;
    }
    setup.flow.roundness_stop > 0.0 && last.r_plus - last.r_minus <= setup.flow.roundness_stop
}

/// Audits records under the setup's law, with the allowance measured from
/// the coarse companion when present.
pub fn audit(
    setup: &RunSetup,
    records: &[DiagnosticsRecord],
    coarse: Option<&[DiagnosticsRecord]>,
) -> AuditReport {
    let allowance = coarse
        .map(|c| diag::discretization_allowance(records, c))
        .unwrap_or_default();
    let ctx = AuditContext {
        law: setup.law,
        allowance,
        expect_convergence: setup.expect_convergence && series_complete(setup, records),
        decay: DecayExpectations::default(),
    };
    diag::audit_suite(records, &ctx)
}

pub fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::NotApplicable => "n/a",
    }
}

// ---------------------------------------------------------------------------
// Artifact serialization

fn coverage(setup: &RunSetup, records: &[DiagnosticsRecord]) -> &'static str {
    let Some(last) = records.last() else {
        return "empty";
    };
    if setup.flow.roundness_stop > 0.0
        && last.r_plus - last.r_minus <= setup.flow.roundness_stop
    {
        return "reached roundness target";
    }
    if last.t >= setup.flow.t_end * (1.0 - 1e-9) {
        return "reached t_end";
    }
    "incomplete"
}

/// Deterministic human-readable summary of a run: a pure function of the
/// stored series and audits, so `report` regenerates it byte-for-byte.
pub fn summary_text(
    setup: &RunSetup,
    records: &[DiagnosticsRecord],
    report: &AuditReport,
) -> String {
    let mut s = String::new();
    let n = setup.law.n();
    let backend = match setup.backend {
        Backend::Circle => "circle",
        Backend::Axisymmetric => "axisymmetric",
    };
    s += &format!("backend: {backend} (n = {n})\n");
    s += &format!(
        "law: sigma = E_{}^{}  (k = {}, alpha = {})\n",
        setup.law.k(),
        setup.law.alpha(),
        setup.law.k(),
        setup.law.alpha()
    );
    s += &format!("shape: {:?} at resolution {}\n", setup.shape, setup.resolution);
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        s += &format!("t: {} .. {}  ({} records)\n", first.t, last.t, records.len());
        s += &format!("coverage: {}\n", coverage(setup, records));
        s += &format!(
            "volume: {} (final drift {:e})\n",
            first.volume, last.volume_drift
        );
        s += &format!(
            "final: l2 = {:e}, gap = {:e}, hausdorff = {:e}\n",
            last.l2_deviation,
            last.r_plus - last.r_minus,
            last.hausdorff_ball
        );
        s += &format!(
            "ball radius: {} (volume-matched {})\n",
            last.ball_radius,
            diag::volume_matched_radius(n, first.volume)
        );
    } else {
        s += "no records\n";
    }
    s += "audits:\n";
    for a in &report.audits {
        s += &format!("  {}: {} ({})\n", a.name, verdict_word(a.verdict), a.note);
    }
    s += &format!("all pass: {}\n", report.all_pass);
    s
}

fn select_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut picked: Vec<usize> = (0..max).map(|j| j * (len - 1) / (max - 1)).collect();
    picked.dedup();
    picked
}

fn snapshot_svg(trajectory: &Trajectory) -> (&'static str, String) {
    let snaps = &trajectory.snapshots;
    let curves: Vec<svg::Curve> = select_indices(snaps.len(), 24)
        .into_iter()
        .map(|i| {
            let s = &snaps[i];
            let mut points = s.body.boundary_points();
            if trajectory.backend == Backend::Axisymmetric {
                // Mirror the meridian across the symmetry axis for a full
                // cross-section.
                let mirrored: Vec<[f64; 2]> =
                    points.iter().rev().map(|p| [-p[0], p[1]]).collect();
                points.extend(mirrored);
            }
            svg::Curve { t: s.t, points }
        })
        .collect();
    match trajectory.backend {
        Backend::Circle => (
            "snapshots.svg",
            svg::render("boundary curves at snapshot times", &curves, true),
        ),
        Backend::Axisymmetric => (
            "meridian.svg",
            svg::render("meridian sections at snapshot times", &curves, true),
        ),
    }
}

/// Writes the complete artifact set for a run into `target`, staging in a
/// sibling temp directory and renaming into place. The caller has already
/// settled the existence/--force question; an existing `target` is
/// replaced.
pub fn write_run_dir(
    target: &Path,
    setup: &RunSetup,
    config_text: &str,
    art: &RunArtifacts,
) -> Result<(), CliError> {
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    fs::create_dir_all(&parent)
        .map_err(|e| runtime(format!("creating {}: {e}", parent.display())))?;
    let stage = tempfile::Builder::new()
        .prefix(".qflow-stage-")
        .tempdir_in(&parent)
        .map_err(|e| runtime(format!("staging in {}: {e}", parent.display())))?;

    let put = |name: &str, content: &str| -> Result<(), CliError> {
        fs::write(stage.path().join(name), content)
            .map_err(|e| runtime(format!("writing {name}: {e}")))
    };

    put("run_config.cfg", config_text)?;
    put("audits.json", &art.report.to_json())?;
    let n = setup.law.n();
    if setup.formats.csv {
        put("series.csv", &diag::records_to_csv(n, &art.trajectory.records))?;
        if let Some(coarse) = &art.coarse {
            put("series_coarse.csv", &diag::records_to_csv(n, coarse))?;
        }
    }
    if setup.formats.snapshots {
        put(
            "snapshots.txt",
            &flow::snapshots_to_text(&art.trajectory.snapshots),
        )?;
    }
    if setup.formats.svg {
        let (name, doc) = snapshot_svg(&art.trajectory);
        put(name, &doc)?;
    }
    if setup.formats.summary {
        put(
            "summary.txt",
            &summary_text(setup, &art.trajectory.records, &art.report),
        )?;
    }

    if target.exists() {
        fs::remove_dir_all(target)
            .map_err(|e| runtime(format!("replacing {}: {e}", target.display())))?;
    }
    let staged = stage.keep();
    fs::rename(&staged, target).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        runtime(format!("moving outputs to {}: {e}", target.display()))
    })
}

fn atomic_write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let mut tmp = tempfile::Builder::new()
        .prefix(".qflow-")
        .tempfile_in(dir)
        .map_err(|e| runtime(format!("staging {name}: {e}")))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| runtime(format!("writing {name}: {e}")))?;
    tmp.persist(dir.join(name))
        .map_err(|e| runtime(format!("replacing {name}: {e}")))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Report regeneration

/// A run directory reloaded from disk.
pub struct StoredRun {
    pub setup: RunSetup,
    pub records: Vec<DiagnosticsRecord>,
    pub coarse: Option<Vec<DiagnosticsRecord>>,
}

pub fn load_run_dir(dir: &Path) -> Result<StoredRun, CliError> {
    let cfg_path = dir.join("run_config.cfg");
    if !cfg_path.is_file() {
        return Err(CliError::Config(format!(
            "{} is not a run directory (no run_config.cfg)",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| CliError::Config(format!("reading run_config.cfg: {e}")))?;
    let raw = config::parse(&text)?;
    let cells = raw.cells();
    if cells.len() != 1 {
        return Err(CliError::Config(
            "stored run_config.cfg must be a single-cell config".into(),
        ));
    }
    let setup = config::build_setup(&raw, &cells[0])?;

    let series = fs::read_to_string(dir.join("series.csv"))
        .map_err(|e| CliError::Config(format!("reading series.csv: {e}")))?;
    let (n, records) =
        diag::records_from_csv(&series).map_err(|e| CliError::Config(e.to_string()))?;
    if n != setup.law.n() {
        return Err(CliError::Config(format!(
            "series.csv has n = {n}, run_config.cfg has n = {}",
            setup.law.n()
        )));
    }
    let coarse = match fs::read_to_string(dir.join("series_coarse.csv")) {
        Ok(text) => Some(
            diag::records_from_csv(&text)
                .map_err(|e| CliError::Config(e.to_string()))?
                .1,
        ),
        Err(_) => None,
    };
    Ok(StoredRun {
        setup,
        records,
        coarse,
    })
}

/// Recomputes audits.json (and summary.txt) from the stored series without
/// re-running the flow; pure, so repeated reports are byte-identical.
pub fn regenerate(dir: &Path) -> Result<(AuditReport, i32), CliError> {
    let stored = load_run_dir(dir)?;
    let report = audit(&stored.setup, &stored.records, stored.coarse.as_deref());
    atomic_write_file(dir, "audits.json", &report.to_json())?;
    if stored.setup.formats.summary {
        atomic_write_file(
            dir,
            "summary.txt",
            &summary_text(&stored.setup, &stored.records, &report),
        )?;
    }
    let exit = if report.all_pass { 0 } else { 1 };
    Ok((report, exit))
}

// ---------------------------------------------------------------------------
// Sweeps

/// Outcome of one sweep cell, with the fields the summary table reports.
pub struct CellOutcome {
    pub name: String,
    pub varied: Vec<(String, String)>,
    pub exit: i32,
    pub stop: &'static str,
    pub last: Option<DiagnosticsRecord>,
    pub verdicts: Vec<(String, Verdict)>,
    pub fit_slope: f64,
    pub fit_r2: f64,
    pub all_pass: bool,
}

fn decay_stat(report: &AuditReport, stat: &str) -> f64 {
    report
        .audits
        .iter()
        .find(|a| a.name == "decay")
        .and_then(|a| a.stats.iter().find(|(k, _)| k == stat))
        .map(|(_, v)| *v)
        .unwrap_or(0.0)
}

fn cell_dir_name(cell: &Cell) -> String {
    if cell.name.is_empty() {
        "single".into()
    } else {
        cell.name.clone()
    }
}

/// Executes every cell (work-stealing across `jobs` threads), writes one
/// output directory per cell under `sweep_dir`, then assembles
/// sweep_summary.csv in cell order.
pub fn run_sweep(
    raw: &Raw,
    cells: &[Cell],
    sweep_dir: &Path,
    jobs: usize,
) -> Result<(Vec<CellOutcome>, i32), CliError> {
    fs::create_dir_all(sweep_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", sweep_dir.display())))?;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CellOutcome, CliError>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let outcome = run_cell(raw, &cells[i], sweep_dir);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut outcomes = Vec::with_capacity(cells.len());
    for slot in slots {
        match slot.into_inner().unwrap().expect("every cell executed") {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => return Err(e),
        }
    }

    atomic_write_file(sweep_dir, "sweep_summary.csv", &sweep_summary_csv(&outcomes))?;

    let exit = if outcomes.iter().any(|o| o.exit == 3) {
        3
    } else if outcomes.iter().any(|o| o.exit == 1) {
        1
    } else {
        0
    };
    Ok((outcomes, exit))
}

fn run_cell(raw: &Raw, cell: &Cell, sweep_dir: &Path) -> Result<CellOutcome, CliError> {
    let setup = config::build_setup(raw, cell)?;
    let art = execute(&setup)?;
    let target = sweep_dir.join(cell_dir_name(cell));
    write_run_dir(&target, &setup, &config::render(raw, cell), &art)?;
    Ok(CellOutcome {
        name: cell_dir_name(cell),
        varied: cell.varied.clone(),
        exit: art.exit,
        stop: art.trajectory.stop.name(),
        last: art.trajectory.records.last().cloned(),
        verdicts: art
            .report
            .audits
            .iter()
            .map(|a| (a.name.clone(), a.verdict))
            .collect(),
        fit_slope: decay_stat(&art.report, "fit_slope"),
        fit_r2: decay_stat(&art.report, "fit_r2"),
        all_pass: art.report.all_pass,
    })
}

fn sweep_summary_csv(outcomes: &[CellOutcome]) -> String {
    let mut header = vec!["cell".to_string()];
    if let Some(first) = outcomes.first() {
        header.extend(first.varied.iter().map(|(k, _)| k.clone()));
        header.extend(
            [
                "exit",
                "stop",
                "t_final",
                "volume_drift",
                "l2_final",
                "gap_final",
                "hausdorff_final",
                "ball_radius",
                "fit_slope",
                "fit_r2",
            ]
            .map(String::from),
        );
        header.extend(first.verdicts.iter().map(|(k, _)| k.clone()));
        header.push("all_pass".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for o in outcomes {
        let mut row = vec![o.name.clone()];
        row.extend(o.varied.iter().map(|(_, v)| v.clone()));
        row.push(o.exit.to_string());
        row.push(o.stop.to_string());
        match &o.last {
            Some(l) => {
                row.push(format!("{:e}", l.t));
                row.push(format!("{:e}", l.volume_drift));
                row.push(format!("{:e}", l.l2_deviation));
                row.push(format!("{:e}", l.r_plus - l.r_minus));
                row.push(format!("{:e}", l.hausdorff_ball));
                row.push(format!("{:e}", l.ball_radius));
            }
            None => row.extend(std::iter::repeat("".to_string()).take(6)),
        }
        row.push(format!("{:e}", o.fit_slope));
        row.push(format!("{:e}", o.fit_r2));
        row.extend(o.verdicts.iter().map(|(_, v)| verdict_word(*v).to_string()));
        row.push(o.all_pass.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

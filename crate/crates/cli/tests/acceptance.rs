//! Acceptance gate: eight numbered criteria, each reported as one
//! `criterion N (...): PASS/FAIL — details` line with its measured values.
//! Every tolerance is pinned in this file. Run with
//!
//! ```text
//! cargo test -p qflow-cli --test acceptance -- --nocapture
//! ```
//!
//! Expensive trajectories are shared between criteria through `OnceLock`;
//! each run's wall time is charged to the criterion that owns its budget.

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use qflow_core::algebra::{self, SpeedLaw};
use qflow_core::diag::{
    audit_balance, audit_decay, audit_monotone, audit_pinching, audit_ros_sequence,
    discretization_allowance, Audit, DecayExpectations, DiagnosticsRecord, MonotoneAllowance,
    Verdict,
};
use qflow_core::flow::{run, FlowConfig, StopReason, Trajectory};
use qflow_core::{make_body, Backend, ShapeSpec, SupportField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// pinned tolerances

/// Criterion 1: identity residuals, samples per dimension, runtime budget.
const C1_REL_TOL: f64 = 1e-10;
const C1_SAMPLES: usize = 100_000;
const C1_BUDGET: Duration = Duration::from_secs(10);

/// Criterion 2: closed-form geometry and inequality floors.
const C2_BALL_REL_CIRCLE: f64 = 1e-10;
const C2_BALL_REL_POLAR: f64 = 1e-6;
const C2_MINKOWSKI_REL: f64 = 1e-8;
const C2_STEINER_REL: f64 = 1e-8;
const C2_AF_FLOOR: f64 = -1e-8;
const C2_ROS_FLOOR: f64 = -1e-6;
const C2_BUDGET: Duration = Duration::from_secs(30);

/// Criterion 3: volume conservation budgets and temporal order.
const C3_DRIFT_UNCORRECTED: f64 = 1e-4;
const C3_DRIFT_CORRECTED: f64 = 1e-12;
const C3_ORDER_MIN: f64 = 2.0;
const C3_BUDGET: Duration = Duration::from_secs(60);

/// Criterion 5: terminal roundness and radius targets.
const C5_GAP_TOL: f64 = 1e-3;
const C5_HAUSDORFF_TOL: f64 = 1e-3;
const C5_RADIUS_TOL: f64 = 1e-3;
const C5_BUDGET: Duration = Duration::from_secs(180);

/// Criterion 6: decay targets on the polar run.
const C6_L2_FINAL: f64 = 1e-6;
const C6_MIN_R2: f64 = 0.95;
/// Relative slack for "L2 deviation never increases" between records.
const C6_L2_UPTICK_SLACK: f64 = 1e-9;

/// Criterion 7: envelope factors around the initial record, and the
/// strictly positive floor for min E_2 on the k = 2 run (its measured
/// minimum is 0.3907, attained at t = 0 on the equator).
const C7_GROWTH_FACTOR: f64 = 1.25;
const C7_H_LOWER: f64 = 0.5;
const C7_H_UPPER: f64 = 2.0;
const C7_E2_FLOOR: f64 = 0.35;

/// Criterion 8: the oversized fixed step for the instability probe
/// (the stable threshold for this body at N = 256 is near 3e-5).
const C8_OVERSIZED_DT: f64 = 2e-4;

// ---------------------------------------------------------------------------
// shared trajectories

struct TimedRun {
    fine: Trajectory,
    coarse: Trajectory,
    elapsed: Duration,
}

const MAIN_SHAPE: ShapeSpec = ShapeSpec::Ellipse { a: 2.0, b: 1.0 };
const MAIN_N: usize = 256;

fn main_law() -> SpeedLaw {
    SpeedLaw::new(1, 1, 1.0).unwrap()
}

fn main_cfg() -> FlowConfig {
    let mut cfg = FlowConfig::new(main_law());
    cfg.t_end = 5.0;
    cfg.volume_correct = true;
    cfg.snapshot_stride = 64;
    cfg
}

/// ellipse(2,1), k = 1, alpha = 1, N = 256, t in [0,5], volume corrected,
/// plus the N = 128 companion that calibrates the discretization allowance.
fn main_run() -> &'static TimedRun {
    static CELL: OnceLock<TimedRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = main_cfg();
        let fine = run(&make_body(&MAIN_SHAPE, Backend::Circle, MAIN_N).unwrap(), &cfg).unwrap();
        let coarse =
            run(&make_body(&MAIN_SHAPE, Backend::Circle, MAIN_N / 2).unwrap(), &cfg).unwrap();
        TimedRun {
            fine,
            coarse,
            elapsed: t0.elapsed(),
        }
    })
}

/// The same run without the volume correction.
fn uncorrected_run() -> &'static (Trajectory, Duration) {
    static CELL: OnceLock<(Trajectory, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let mut cfg = main_cfg();
        cfg.volume_correct = false;
        let tr = run(&make_body(&MAIN_SHAPE, Backend::Circle, MAIN_N).unwrap(), &cfg).unwrap();
        (tr, t0.elapsed())
    })
}

/// Short companion runs of the same body at alpha = 0.5 and alpha = 2.
fn alpha_runs() -> &'static Vec<(f64, TimedRun)> {
    static CELL: OnceLock<Vec<(f64, TimedRun)>> = OnceLock::new();
    CELL.get_or_init(|| {
        [0.5, 2.0]
            .iter()
            .map(|&alpha| {
                let t0 = Instant::now();
                let mut cfg = FlowConfig::new(SpeedLaw::new(1, 1, alpha).unwrap());
                cfg.t_end = 1.2;
                cfg.volume_correct = true;
                cfg.snapshot_stride = 32;
                let fine =
                    run(&make_body(&MAIN_SHAPE, Backend::Circle, MAIN_N).unwrap(), &cfg).unwrap();
                let coarse =
                    run(&make_body(&MAIN_SHAPE, Backend::Circle, MAIN_N / 2).unwrap(), &cfg)
                        .unwrap();
                (
                    alpha,
                    TimedRun {
                        fine,
                        coarse,
                        elapsed: t0.elapsed(),
                    },
                )
            })
            .collect()
    })
}

const POLAR_SHAPE: ShapeSpec = ShapeSpec::EllipsoidRev { a: 1.0, c: 1.6 };

/// ellipsoid_rev(1, 1.6), k = 2, alpha = 1, N = 256, run to roundness 3e-6.
fn polar_run() -> &'static TimedRun {
    static CELL: OnceLock<TimedRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let mut cfg = FlowConfig::new(SpeedLaw::new(2, 2, 1.0).unwrap());
        cfg.t_end = 8.0;
        cfg.volume_correct = true;
        cfg.snapshot_stride = 64;
        cfg.roundness_stop = 3e-6;
        let fine = run(
            &make_body(&POLAR_SHAPE, Backend::Axisymmetric, 256).unwrap(),
            &cfg,
        )
        .unwrap();
        let coarse = run(
            &make_body(&POLAR_SHAPE, Backend::Axisymmetric, 128).unwrap(),
            &cfg,
        )
        .unwrap();
        TimedRun {
            fine,
            coarse,
            elapsed: t0.elapsed(),
        }
    })
}

// ---------------------------------------------------------------------------
// helpers

fn conclude(number: u8, title: &str, pass: bool, details: &str) {
    println!(
        "criterion {number} ({title}): {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} ({title}): {details}");
}

fn stat(audit: &Audit, name: &str) -> f64 {
    audit
        .stats
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN)
}

fn max_drift(records: &[DiagnosticsRecord]) -> f64 {
    records
        .iter()
        .map(|r| r.volume_drift.abs())
        .fold(0.0, f64::max)
}

fn gap(r: &DiagnosticsRecord) -> f64 {
    r.r_plus - r.r_minus
}

// ---------------------------------------------------------------------------
// criteria

#[test]
fn criterion_1_symmetric_function_identities() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(118_999);
    let mut worst = 0.0f64;
    let mut grad = [0.0f64; 6];
    let mut evaluations = 0u64;
    for n in 1..=6usize {
        let unit: Vec<SpeedLaw> = (1..=n).map(|k| SpeedLaw::new(n, k, 1.0).unwrap()).collect();
        let bent: Vec<Vec<SpeedLaw>> = [0.5, 2.0]
            .iter()
            .map(|&a| (1..=n).map(|k| SpeedLaw::new(n, k, a).unwrap()).collect())
            .collect();
        let mut lambda = vec![0.0f64; n];
        for _ in 0..C1_SAMPLES {
            for v in lambda.iter_mut() {
                *v = 10f64.powf(rng.gen_range(-3.0..3.0));
            }
            for k in 1..=n {
                // Derivative identity, derivative lower bound, Maclaurin
                // step, and the Euler identity at alpha = 1 ...
                let res = algebra::identity_residuals(&lambda, &unit[k - 1]).unwrap();
                worst = worst.max(res.max());
                // ... plus the Euler identity at alpha = 0.5 and 2.
                for laws in &bent {
                    let law = &laws[k - 1];
                    let sigma = algebra::speed(&lambda, law).unwrap();
                    algebra::speed_grad_into(&lambda, law, &mut grad[..n]).unwrap();
                    let dot: f64 = grad[..n].iter().zip(&lambda).map(|(g, l)| g * l).sum();
                    let target = law.degree() * sigma;
                    worst = worst.max(((dot - target) / target).abs());
                }
                evaluations += 3;
            }
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst <= C1_REL_TOL && elapsed <= C1_BUDGET;
    conclude(
        1,
        "symmetric-function identity residuals",
        pass,
        &format!(
            "worst relative residual {worst:.3e} (tol {C1_REL_TOL:.0e}) over {evaluations} \
             (n, k, alpha) evaluations on lambda in (1e-3, 1e3)^n, {:.2}s (budget {}s)",
            elapsed.as_secs_f64(),
            C1_BUDGET.as_secs()
        ),
    );
}

#[test]
fn criterion_2_closed_form_geometry_and_inequalities() {
    let t0 = Instant::now();
    let mut fails: Vec<String> = Vec::new();

    // Unit ball closed forms on both grids.
    let circle = make_body(&ShapeSpec::Sphere { radius: 1.0 }, Backend::Circle, 128).unwrap();
    let sphere =
        make_body(&ShapeSpec::Sphere { radius: 1.0 }, Backend::Axisymmetric, 256).unwrap();
    let two_pi = 2.0 * std::f64::consts::PI;
    let four_pi = 4.0 * std::f64::consts::PI;
    let ball_checks = [
        ("circle perimeter", circle.area().unwrap(), two_pi, C2_BALL_REL_CIRCLE),
        ("circle area", circle.volume().unwrap(), two_pi / 2.0, C2_BALL_REL_CIRCLE),
        ("sphere area", sphere.area().unwrap(), four_pi, C2_BALL_REL_POLAR),
        ("sphere volume", sphere.volume().unwrap(), four_pi / 3.0, C2_BALL_REL_POLAR),
    ];
    let mut worst_ball = 0.0f64;
    for (what, got, want, tol) in ball_checks {
        let rel = ((got - want) / want).abs();
        worst_ball = worst_ball.max(rel);
        if rel > tol {
            fails.push(format!("{what} off by {rel:.2e} (tol {tol:.0e})"));
        }
    }

    // 50 random bodies: 25 per backend. The polar bodies use N = 384 and a
    // generous convexity margin so the 4th-order stencils resolve them to
    // the 1e-8 gate (the circle grid is spectral and sits at roundoff).
    let mut bodies: Vec<SupportField> = Vec::new();
    for seed in 0..25u64 {
        bodies.push(
            make_body(
                &ShapeSpec::RandomTrig { seed: 2000 + seed, modes: 6, margin: 0.2 },
                Backend::Circle,
                128,
            )
            .unwrap(),
        );
    }
    for seed in 0..25u64 {
        bodies.push(
            make_body(
                &ShapeSpec::RandomTrig { seed: 1000 + seed, modes: 4, margin: 0.5 },
                Backend::Axisymmetric,
                384,
            )
            .unwrap(),
        );
    }

    let mut worst_minkowski = 0.0f64;
    let mut worst_af = f64::INFINITY;
    let mut worst_ros = f64::INFINITY;
    for body in bodies.iter().chain([&circle, &sphere]) {
        let n = body.ambient_n();
        let area = body.area().unwrap();
        for l in 0..n {
            let rel = body.minkowski_residual(l).unwrap().abs() / area;
            worst_minkowski = worst_minkowski.max(rel);
        }
        for m in 1..=n {
            for l in (m + 1)..=(n + 1) {
                worst_af = worst_af.min(body.af_deficit(m, l).unwrap());
            }
        }
        if n >= 2 {
            worst_ros = worst_ros.min(body.ros_deficit().unwrap());
        }
    }
    if worst_minkowski > C2_MINKOWSKI_REL {
        fails.push(format!(
            "Minkowski residual {worst_minkowski:.2e} exceeds {C2_MINKOWSKI_REL:.0e}"
        ));
    }
    if worst_af < C2_AF_FLOOR {
        fails.push(format!(
            "Alexandrov-Fenchel deficit {worst_af:.2e} below {C2_AF_FLOOR:.0e}"
        ));
    }
    if worst_ros < C2_ROS_FLOOR {
        fails.push(format!("Ros deficit {worst_ros:.2e} below {C2_ROS_FLOOR:.0e}"));
    }

    // Equality cases on balls.
    let mut ball_af = 0.0f64;
    ball_af = ball_af.max(circle.af_deficit(1, 2).unwrap().abs());
    for (m, l) in [(1, 2), (1, 3), (2, 3)] {
        ball_af = ball_af.max(sphere.af_deficit(m, l).unwrap().abs());
    }
    if ball_af > C2_AF_FLOOR.abs() {
        fails.push(format!("Alexandrov-Fenchel deficit {ball_af:.2e} on balls"));
    }
    let ball_ros = sphere.ros_deficit().unwrap().abs();
    if ball_ros > C2_ROS_FLOOR.abs() {
        fails.push(format!("Ros deficit {ball_ros:.2e} on the unit sphere"));
    }

    // Parallel-body polynomial on the ellipse: Vol(K + tB) coefficient check.
    let ellipse = make_body(&MAIN_SHAPE, Backend::Circle, 256).unwrap();
    let v = ellipse.mixed_volumes().unwrap();
    let mut worst_steiner = 0.0f64;
    for t in [0.1, 1.0, 3.0] {
        let grown = ellipse.outer_parallel(t).unwrap().volume().unwrap();
        let poly = v[2] + 2.0 * v[1] * t + v[0] * t * t;
        worst_steiner = worst_steiner.max((grown - poly).abs() / grown);
    }
    if worst_steiner > C2_STEINER_REL {
        fails.push(format!(
            "parallel-body polynomial residual {worst_steiner:.2e} exceeds {C2_STEINER_REL:.0e}"
        ));
    }

    let elapsed = t0.elapsed();
    if elapsed > C2_BUDGET {
        fails.push(format!("runtime {:.1}s over budget", elapsed.as_secs_f64()));
    }
    let pass = fails.is_empty();
    let details = if pass {
        format!(
            "balls {worst_ball:.2e}; Minkowski {worst_minkowski:.2e} (50 random bodies); \
             parallel-body {worst_steiner:.2e}; AF deficit min {worst_af:.2e}, on balls {ball_af:.2e}; \
             Ros min {worst_ros:.2e}, on sphere {ball_ros:.2e}; {:.2}s",
            elapsed.as_secs_f64()
        )
    } else {
        fails.join("; ")
    };
    conclude(2, "closed-form geometry and inequality floors", pass, &details);
}

#[test]
fn criterion_3_volume_conservation() {
    let main = main_run();
    let (unc, unc_elapsed) = uncorrected_run();
    let t0 = Instant::now();

    let drift_uncorrected = max_drift(&unc.records);
    let drift_corrected = max_drift(&main.fine.records);

    // Temporal order of the volume error under dt halving. The probe runs
    // at N = 64: at N = 256 every stable fixed dt leaves a drift of ~1e-14,
    // i.e. at the accumulation floor of f64 roundoff, with no measurable
    // dt-power signal left (that floor is itself reported above through
    // `drift_uncorrected`). Halving dt on the coarser grid shows the
    // uncontaminated order.
    let probe = make_body(&MAIN_SHAPE, Backend::Circle, 64).unwrap();
    let mut drifts = Vec::new();
    let mut probe_failed = false;
    for dt in [4e-4, 2e-4, 1e-4] {
        let mut cfg = FlowConfig::new(main_law());
        cfg.t_end = 0.5;
        cfg.fixed_dt = Some(dt);
        cfg.snapshot_stride = u32::MAX;
        let tr = run(&probe, &cfg).unwrap();
        probe_failed |= tr.failure.is_some();
        drifts.push(max_drift(&tr.records[tr.records.len() - 1..]));
    }
    let mut min_order = f64::INFINITY;
    for pair in drifts.windows(2) {
        min_order = min_order.min((pair[0] / pair[1]).log2());
    }

    let elapsed = main.elapsed + *unc_elapsed + t0.elapsed();
    let pass = drift_uncorrected <= C3_DRIFT_UNCORRECTED
        && drift_corrected <= C3_DRIFT_CORRECTED
        && !probe_failed
        && min_order >= C3_ORDER_MIN
        && elapsed <= C3_BUDGET;
    conclude(
        3,
        "volume conservation",
        pass,
        &format!(
            "uncorrected drift {drift_uncorrected:.2e} (tol {C3_DRIFT_UNCORRECTED:.0e}), \
             corrected {drift_corrected:.2e} (tol {C3_DRIFT_CORRECTED:.0e}), \
             dt-halving order {min_order:.2} (min {C3_ORDER_MIN}, N = 64 probe, drifts \
             {:.2e}/{:.2e}/{:.2e}), {:.1}s (budget {}s)",
            drifts[0],
            drifts[1],
            drifts[2],
            elapsed.as_secs_f64(),
            C3_BUDGET.as_secs()
        ),
    );
}

#[test]
fn criterion_4_dissipation_monotonicity_and_balance() {
    let mut cases: Vec<(String, &TimedRun)> = vec![("alpha=1".into(), main_run())];
    for (alpha, tr) in alpha_runs() {
        cases.push((format!("alpha={alpha}"), tr));
    }

    let mut fails = Vec::new();
    let mut details = Vec::new();
    for (label, tr) in &cases {
        let allowance = discretization_allowance(&tr.fine.records, &tr.coarse.records);
        let monotone = audit_monotone(&tr.fine.records, &allowance);
        let balance = audit_balance(&tr.fine.records);
        if monotone.verdict != Verdict::Pass {
            fails.push(format!("{label}: monotone audit {:?}", monotone.verdict));
        }
        if balance.verdict != Verdict::Pass {
            fails.push(format!("{label}: balance audit {:?}", balance.verdict));
        }
        details.push(format!(
            "{label} mismatch {:.1e} over {} intervals (allowance {:.1e})",
            stat(&balance, "max_rel_mismatch"),
            stat(&balance, "checked"),
            allowance.curvature_integral,
        ));
    }
    let pass = fails.is_empty();
    let text = if pass { details.join("; ") } else { fails.join("; ") };
    conclude(
        4,
        "dissipation monotonicity and balance identity",
        pass,
        &format!("{text}; balance tolerance 5%"),
    );
}

#[test]
fn criterion_5_convergence_to_the_volume_matched_ball() {
    let main = main_run();
    let polar = polar_run();
    let t0 = Instant::now();
    let mut fails = Vec::new();

    let last = main.fine.records.last().unwrap();
    let target = 2.0f64.sqrt();
    if gap(last) > C5_GAP_TOL {
        fails.push(format!("circle gap {:.2e} exceeds {C5_GAP_TOL:.0e}", gap(last)));
    }
    if last.hausdorff_ball > C5_HAUSDORFF_TOL {
        fails.push(format!(
            "circle Hausdorff {:.2e} exceeds {C5_HAUSDORFF_TOL:.0e}",
            last.hausdorff_ball
        ));
    }
    let radius_err = (last.ball_radius - target).abs();
    if radius_err > C5_RADIUS_TOL {
        fails.push(format!("circle radius off sqrt(2) by {radius_err:.2e}"));
    }

    let plast = polar.fine.records.last().unwrap();
    let expected = (3.0 * polar.fine.vol0 / (4.0 * std::f64::consts::PI)).powf(1.0 / 3.0);
    let polar_err = (plast.ball_radius - expected).abs();
    if polar_err > C5_RADIUS_TOL {
        fails.push(format!(
            "polar radius off (3 vol / 4 pi)^(1/3) by {polar_err:.2e}"
        ));
    }
    if !matches!(polar.fine.stop, StopReason::Roundness) {
        fails.push(format!("polar run stopped by {}", polar.fine.stop.name()));
    }

    let elapsed = main.elapsed + polar.elapsed + t0.elapsed();
    if elapsed > C5_BUDGET {
        fails.push(format!("runtime {:.1}s over budget", elapsed.as_secs_f64()));
    }
    let pass = fails.is_empty();
    let details = if pass {
        format!(
            "circle: gap {:.2e}, Hausdorff {:.2e}, radius error {:.2e} vs sqrt(2); \
             polar: radius error {polar_err:.2e} vs {expected:.6} at t = {:.3} (roundness stop); \
             {:.1}s (budget {}s)",
            gap(last),
            last.hausdorff_ball,
            radius_err,
            plast.t,
            elapsed.as_secs_f64(),
            C5_BUDGET.as_secs()
        )
    } else {
        fails.join("; ")
    };
    conclude(5, "convergence to the volume-matched ball", pass, &details);
}

#[test]
fn criterion_6_decay_diagnostics_on_the_gauss_curvature_run() {
    let polar = polar_run();
    let records = &polar.fine.records;
    let mut fails = Vec::new();

    let l2_final = records.last().unwrap().l2_deviation;
    if !(l2_final < C6_L2_FINAL) {
        fails.push(format!("final L2 deviation {l2_final:.2e} not below {C6_L2_FINAL:.0e}"));
    }
    let mut worst_uptick = 0.0f64;
    for pair in records.windows(2) {
        worst_uptick =
            worst_uptick.max((pair[1].l2_deviation - pair[0].l2_deviation) / pair[0].l2_deviation);
    }
    if worst_uptick > C6_L2_UPTICK_SLACK {
        fails.push(format!("L2 deviation increased by {worst_uptick:.2e} between records"));
    }

    let decay = audit_decay(records, &DecayExpectations::default());
    let slope = stat(&decay, "fit_slope");
    let r2 = stat(&decay, "fit_r2");
    let points = stat(&decay, "fit_points");
    if decay.verdict != Verdict::Pass {
        fails.push(format!("decay audit {:?}: {}", decay.verdict, decay.note));
    }
    if !(slope < 0.0 && r2 >= C6_MIN_R2) {
        fails.push(format!("gap fit slope {slope:.3} / R^2 {r2:.4} misses the gate"));
    }

    let allowance = discretization_allowance(records, &polar.coarse.records);
    let ros = audit_ros_sequence(records, &allowance);
    if ros.verdict != Verdict::Pass {
        fails.push(format!("Ros-sequence audit {:?}: {}", ros.verdict, ros.note));
    }

    let pass = fails.is_empty();
    let details = if pass {
        format!(
            "L2 {:.1e} -> {l2_final:.1e} with no upticks; log-gap slope {slope:.3} \
             (R^2 {r2:.4}, {points:.0} points); Ros deficit min {:.1e}, final L1 {:.1e}",
            records[0].l2_deviation,
            stat(&ros, "ros_deficit_min"),
            stat(&ros, "ros_l1_final"),
        )
    } else {
        fails.join("; ")
    };
    conclude(6, "decay diagnostics on the k = 2 run", pass, &details);
}

#[test]
fn criterion_7_bound_witnesses_on_all_shipped_runs() {
    let mut cases: Vec<(String, &Trajectory)> = vec![
        ("circle alpha=1".into(), &main_run().fine),
        ("circle alpha=1 uncorrected".into(), &uncorrected_run().0),
        ("polar k=2".into(), &polar_run().fine),
    ];
    for (alpha, tr) in alpha_runs() {
        cases.push((format!("circle alpha={alpha}"), &tr.fine));
    }

    let mut fails = Vec::new();
    let mut pinching_margin = f64::INFINITY;
    for (label, tr) in &cases {
        let pinching = audit_pinching(&tr.records);
        pinching_margin = pinching_margin.min(stat(&pinching, "min_relative_margin"));
        if pinching.verdict != Verdict::Pass {
            fails.push(format!("{label}: pinching audit {:?}", pinching.verdict));
        }
        let first = &tr.records[0];
        let sigma_cap = C7_GROWTH_FACTOR * first.sigma_max.max(first.h);
        let lambda_cap = C7_GROWTH_FACTOR * first.lambda_max;
        let h_low = C7_H_LOWER * first.sigma_min;
        let h_high = C7_H_UPPER * first.sigma_max;
        for r in &tr.records {
            if r.sigma_max > sigma_cap {
                fails.push(format!("{label}: sigma_max {:.3} over cap {sigma_cap:.3}", r.sigma_max));
                break;
            }
            if r.lambda_max > lambda_cap {
                fails.push(format!(
                    "{label}: lambda_max {:.3} over cap {lambda_cap:.3}",
                    r.lambda_max
                ));
                break;
            }
            if !(h_low <= r.h && r.h <= h_high) {
                fails.push(format!("{label}: h {:.3} outside [{h_low:.3}, {h_high:.3}]", r.h));
                break;
            }
        }
    }

    let e2_min = polar_run()
        .fine
        .records
        .iter()
        .map(|r| r.sigma_min)
        .fold(f64::INFINITY, f64::min);
    if !(e2_min >= C7_E2_FLOOR) {
        fails.push(format!("min E_2 {e2_min:.4} fell below the floor {C7_E2_FLOOR}"));
    }

    let pass = fails.is_empty();
    let details = if pass {
        format!(
            "pinching margin {pinching_margin:.3} across {} runs (slack 1%); sigma_max/lambda_max \
             within {C7_GROWTH_FACTOR}x of t = 0, h within [{C7_H_LOWER}, {C7_H_UPPER}]x; \
             min E_2 on the k = 2 run {e2_min:.4} >= {C7_E2_FLOOR}",
            cases.len()
        )
    } else {
        fails.join("; ")
    };
    conclude(7, "bound witnesses", pass, &details);
}

#[test]
fn criterion_8_negative_controls() {
    let mut fails = Vec::new();

    // (a) A reversed trajectory must fail the monotonicity audit.
    let mut reversed = main_run().fine.records.clone();
    reversed.reverse();
    let monotone = audit_monotone(&reversed, &MonotoneAllowance::default());
    if monotone.verdict != Verdict::Fail {
        fails.push(format!(
            "reversed-trajectory monotone audit returned {:?}",
            monotone.verdict
        ));
    }

    // (b) The sign-corrupted verification run must exit nonzero.
    let out = Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(["verify", "algebra", "--samples", "60", "--corrupt", "sign-error"])
        .output()
        .expect("spawn qflow");
    if out.status.code() != Some(1) {
        fails.push(format!(
            "corrupted `verify algebra` exited {:?}, expected 1",
            out.status.code()
        ));
    }

    // (c) An oversized fixed step must fail with a convexity-loss diagnosis.
    let mut cfg = FlowConfig::new(main_law());
    cfg.t_end = 1.0;
    cfg.fixed_dt = Some(C8_OVERSIZED_DT);
    cfg.snapshot_stride = u32::MAX;
    let probe = run(
        &make_body(&MAIN_SHAPE, Backend::Circle, MAIN_N).unwrap(),
        &cfg,
    )
    .unwrap();
    let cause = match (&probe.stop, &probe.failure) {
        (StopReason::StepFailure, Some(f)) => f.cause.to_string(),
        _ => String::new(),
    };
    if !cause.contains("convexity lost") {
        fails.push(format!(
            "oversized dt {C8_OVERSIZED_DT:.0e} did not fail with a convexity-loss diagnosis \
             (stop {}, cause {cause:?})",
            probe.stop.name()
        ));
    }

    let pass = fails.is_empty();
    let details = if pass {
        format!(
            "reversed trajectory fails monotone audit (violation {:.2e}); corrupted verify \
             exits 1; fixed dt {C8_OVERSIZED_DT:.0e} fails with {cause:?}",
            monotone.worst_violation
        )
    } else {
        fails.join("; ")
    };
    conclude(8, "negative controls", pass, &details);
}

//! End-to-end behavior of the flow integrator, checked against closed-form
//! linearized rates and the full trajectory audit suite.

use qflow_core::diag::{self, AuditContext, DecayExpectations, MonotoneAllowance, Verdict};
use qflow_core::flow::{self, FlowConfig, StopReason};
use qflow_core::{make_body, Backend, ShapeSpec, SpeedLaw, SupportField};

fn audit<'a>(report: &'a diag::AuditReport, name: &str) -> &'a diag::Audit {
    report
        .audits
        .iter()
        .find(|a| a.name == name)
        .unwrap_or_else(|| panic!("no audit named {name}"))
}

fn stat(a: &diag::Audit, name: &str) -> f64 {
    a.stats
        .iter()
        .find(|(k, _)| k == name)
        .unwrap_or_else(|| panic!("audit {} has no stat {name}", a.name))
        .1
}

/// Linearizing du/dt = h - 1/(u'' + u) about the unit circle turns
/// u = 1 + eps cos(m theta) into eps' = -(m^2 - 1) eps, so the squared L2
/// deviation of the speed from its mean decays like exp(-2 (m^2 - 1) t).
/// The first neglected correction is O(eps) relative (the cubic terms
/// integrate to zero against cos), so eps = 0.01 leaves a comfortable 2%.
#[test]
fn mode_two_perturbation_decays_at_the_linearized_rate() {
    let base = make_body(&ShapeSpec::Sphere { radius: 1.0 }, Backend::Circle, 64).unwrap();
    let u: Vec<f64> = base
        .node_params()
        .iter()
        .map(|&t| 1.0 + 0.01 * (2.0 * t).cos())
        .collect();
    let body = SupportField::from_values(Backend::Circle, u).unwrap();

    let law = SpeedLaw::new(1, 1, 1.0).unwrap();
    let mut config = FlowConfig::new(law);
    config.t_end = 0.3;

    let traj = flow::run(&body, &config).unwrap();
    assert_eq!(traj.stop, StopReason::TimeReached);

    let first = &traj.records[0];
    let last = traj.records.last().unwrap();
    assert!((last.t - 0.3).abs() < 1e-9);

    let ratio = last.l2_deviation / first.l2_deviation;
    let expected = (-6.0f64 * 0.3).exp();
    assert!(
        (ratio / expected - 1.0).abs() < 2e-2,
        "L2 ratio {ratio:.6e}, linearized prediction {expected:.6e}"
    );
}

/// The continuous flow conserves the enclosed volume exactly, so with the
/// volume projection switched off the only drift is integration error,
/// bounded by the step controller's local tolerance accumulated over the
/// run.
#[test]
fn uncorrected_volume_drift_stays_at_integration_accuracy() {
    let body = make_body(&ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, Backend::Circle, 64).unwrap();
    let law = SpeedLaw::new(1, 1, 1.0).unwrap();
    let mut config = FlowConfig::new(law);
    config.t_end = 1.0;
    config.snapshot_stride = 16;

    let traj = flow::run(&body, &config).unwrap();
    assert_eq!(traj.stop, StopReason::TimeReached);
    for rec in &traj.records {
        assert!(
            rec.volume_drift.abs() < 1e-6,
            "volume drift {:.3e} at t = {:.3}",
            rec.volume_drift,
            rec.t
        );
    }
}

/// A 1.3 : 1 ellipse flowed well past its relaxation time must satisfy every
/// trajectory audit: monotone functionals, the dissipation balance, the
/// pinching bound, and convergence to the area-matched circle at the
/// linearized exponential rate 3 / R^2 (slowest surviving mode m = 2).
#[test]
fn circle_ellipse_run_passes_all_audits() {
    let body = make_body(&ShapeSpec::Ellipse { a: 1.3, b: 1.0 }, Backend::Circle, 64).unwrap();
    let law = SpeedLaw::new(1, 1, 1.0).unwrap();
    let mut config = FlowConfig::new(law);
    config.t_end = 5.5;
    config.snapshot_stride = 32;
    config.volume_correct = true;

    let traj = flow::run(&body, &config).unwrap();
    assert_eq!(traj.stop, StopReason::TimeReached);
    assert!(traj.failure.is_none());

    let ctx = AuditContext {
        law,
        allowance: MonotoneAllowance::default(),
        expect_convergence: true,
        decay: DecayExpectations::default(),
    };
    let report = diag::audit_suite(&traj.records, &ctx);
    for a in &report.audits {
        let expected = if a.name == "ros_sequence" {
            Verdict::NotApplicable // needs n = 2, k = 2
        } else {
            Verdict::Pass
        };
        assert_eq!(a.verdict, expected, "audit {}: {}", a.name, a.note);
    }
    assert!(report.all_pass);

    // The fitted gap slope is the mode-2 linearized rate of the
    // volume-matched circle.
    let decay = audit(&report, "decay");
    let r = diag::volume_matched_radius(1, traj.vol0);
    let predicted = -3.0 / (r * r);
    let slope = stat(decay, "fit_slope");
    assert!(
        (slope / predicted - 1.0).abs() < 0.15,
        "gap slope {slope:.4} vs linearized {predicted:.4}"
    );

    // Real trajectory records survive the CSV codec bit-for-bit.
    let text = diag::records_to_csv(1, &traj.records);
    let (n, back) = diag::records_from_csv(&text).unwrap();
    assert_eq!(n, 1);
    assert_eq!(back, traj.records);
}

/// The axisymmetric analogue under the Gauss-curvature root law
/// sigma = E_2^{1/2}: a 1.15 : 0.85 spheroid converges to the
/// volume-matched sphere, every audit passes (now including the Ros
/// sequence), and the gap decays at the linearized l = 2 rate
/// (l (l + 1) - 2) / (2 R^2) = 2 / R^2.
#[test]
fn polar_ellipsoid_run_passes_all_audits() {
    let body = make_body(
        &ShapeSpec::EllipsoidRev { a: 1.15, c: 0.85 },
        Backend::Axisymmetric,
        64,
    )
    .unwrap();
    let law = SpeedLaw::new(2, 2, 0.5).unwrap();
    let mut config = FlowConfig::new(law);
    config.t_end = 4.5;
    config.snapshot_stride = 32;
    config.volume_correct = true;

    let traj = flow::run(&body, &config).unwrap();
    assert_eq!(traj.stop, StopReason::TimeReached);
    assert!(traj.failure.is_none());

    let ctx = AuditContext {
        law,
        allowance: MonotoneAllowance::default(),
        expect_convergence: true,
        decay: DecayExpectations::default(),
    };
    let report = diag::audit_suite(&traj.records, &ctx);
    for a in &report.audits {
        assert_eq!(a.verdict, Verdict::Pass, "audit {}: {}", a.name, a.note);
    }
    assert!(report.all_pass);

    let decay = audit(&report, "decay");
    let r = diag::volume_matched_radius(2, traj.vol0);
    let predicted = -2.0 / (r * r);
    let slope = stat(decay, "fit_slope");
    assert!(
        (slope / predicted - 1.0).abs() < 0.15,
        "gap slope {slope:.4} vs linearized {predicted:.4}"
    );

    // Ros fields are populated on n = 2, k = 2 and end near zero.
    let ros = audit(&report, "ros_sequence");
    assert!(stat(ros, "ros_deficit_min") > -1e-6);
    assert!(stat(ros, "ros_l1_final") < 1e-2);

    let text = diag::records_to_csv(2, &traj.records);
    let (n, back) = diag::records_from_csv(&text).unwrap();
    assert_eq!(n, 2);
    assert_eq!(back, traj.records);
}

/// Richardson check of the underlying one-step method: halving a fixed dt
/// twice, the successive final-state differences shrink by the factor 4 of
/// a second-order scheme.
#[test]
fn fixed_step_richardson_ratio_is_second_order() {
    let body = make_body(&ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, Backend::Circle, 64).unwrap();
    let law = SpeedLaw::new(1, 1, 1.0).unwrap();

    let final_values = |dt: f64| -> Vec<f64> {
        let mut config = FlowConfig::new(law);
        config.t_end = 0.5;
        config.fixed_dt = Some(dt);
        config.snapshot_stride = u32::MAX;
        let traj = flow::run(&body, &config).unwrap();
        assert_eq!(traj.stop, StopReason::TimeReached);
        traj.snapshots.last().unwrap().body.values().to_vec()
    };

    let coarse = final_values(8.0e-4);
    let medium = final_values(4.0e-4);
    let fine = final_values(2.0e-4);

    let sup = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let d1 = sup(&coarse, &medium);
    let d2 = sup(&medium, &fine);
    let ratio = d1 / d2;
    assert!(
        (3.3..=4.7).contains(&ratio),
        "difference ratio {ratio:.3} (d1 = {d1:.3e}, d2 = {d2:.3e})"
    );
}

/// With a roundness threshold set, the run halts as soon as a recorded
/// in/out gap falls below it, well before t_end.
#[test]
fn roundness_stop_triggers_once_the_gap_closes() {
    let body = make_body(&ShapeSpec::Ellipse { a: 1.05, b: 1.0 }, Backend::Circle, 64).unwrap();
    let law = SpeedLaw::new(1, 1, 1.0).unwrap();
    let mut config = FlowConfig::new(law);
    config.t_end = 50.0;
    config.snapshot_stride = 16;
    config.roundness_stop = 1e-5;

    let traj = flow::run(&body, &config).unwrap();
    assert_eq!(traj.stop, StopReason::Roundness);
    assert!(traj.accepted_steps > 0);

    let last = traj.records.last().unwrap();
    assert!(last.r_plus - last.r_minus <= 1e-5);
    assert!(last.t < 10.0, "stopped only at t = {}", last.t);
}

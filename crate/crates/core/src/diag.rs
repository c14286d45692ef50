//! Per-state diagnostics records and trajectory-level audits.
//!
//! A [`DiagnosticsRecord`] captures every scalar the structural results
//! speak about: volume conservation, mean speed, curvature extremes, the
//! monotone quantities (curvature integral, isoperimetric ratio), the
//! dissipation balance, ball-comparison measures and the Ros sequence. The
//! audit functions then check the recorded trajectory against those
//! results: monotonicity, the dissipation identity, the curvature pinching
//! bound, convergence/decay to the volume-matched ball, and the Ros
//! sequence, each returning a structured verdict.

use thiserror::Error;

use crate::algebra::{self, AlgebraError, SpeedLaw};
use crate::body::{ball_volume_constant, iso_ratio_from_mixed, BodyError, SupportField};

/// Relative slack granted to "monotone" comparisons on top of the measured
/// discretization allowance.
pub const MONOTONE_REL_SLACK: f64 = 1e-9;
/// Relative slack granted to the pinching lower bound.
pub const PINCHING_SLACK: f64 = 1e-2;
/// Records with L2 deviation at or below this floor are excluded from the
/// balance audit (the identity degenerates to 0 = 0 there). On the circle
/// the discrete identity is exact, so the floor only guards division noise.
pub const BALANCE_L2_FLOOR: f64 = 1e-10;
/// Floor used on the polar grid, where the finite-difference surface term
/// leaves an absolute residual in the identity: below this L2 level the
/// quadratic signal would drown in it.
pub const BALANCE_L2_FLOOR_POLAR: f64 = 3e-7;
/// Maximum relative mismatch accepted between the finite-difference
/// derivative of the curvature integral and the recorded balance integrand.
pub const BALANCE_REL_TOL: f64 = 0.05;
/// The centered difference carries a truncation error of roughly
/// rate^2 * dt_before * dt_after / 6 relative to an exponentially decaying
/// integrand. Intervals where that prediction exceeds this fraction of
/// `BALANCE_REL_TOL` are too coarse to certify the identity either way
/// (typically the tail of a run, where the step size grows) and are skipped.
pub const BALANCE_RESOLUTION_FRACTION: f64 = 0.25;
/// Minimum R^2 for the exponential-decay fit.
pub const DECAY_MIN_R2: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagError {
    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Scalar diagnostics of one flow state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Time step used to reach this state.
    pub dt: f64,
    pub volume: f64,
    pub area: f64,
    /// Mixed volumes V_0 .. V_{n+1}.
    pub mixed_volumes: Vec<f64>,
    pub h: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// integral of (sigma - h)^2 d mu.
    pub l2_deviation: f64,
    /// I_{n-k+1} for the flow's k.
    pub iso_ratio: f64,
    /// integral of E_{k-1}(lambda) d mu, the monotone curvature integral.
    pub curvature_integral_km1: f64,
    /// -k integral of (sigma - h)(E_k - h^{1/alpha}) d mu: the exact time
    /// derivative of `curvature_integral_km1` along the flow.
    pub balance_rhs: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub hausdorff_ball: f64,
    /// Radius of the Hausdorff-optimal ball.
    pub ball_radius: f64,
    pub minkowski_res_0: f64,
    /// Ros deficit (n = 2 backends only).
    pub ros_deficit: Option<f64>,
    /// integral of |E_2^{-1/2} - h_k^{-1/2}| d mu for n = 2, k = 2 flows,
    /// with h_k = h^{1/alpha} the E_2-scale mean.
    pub ros_l1: Option<f64>,
    /// (volume - vol0) / vol0.
    pub volume_drift: f64,
}

impl DiagnosticsRecord {
    /// Hypersurface dimension implied by the mixed-volume count.
    pub fn ambient_n(&self) -> usize {
        self.mixed_volumes.len() - 2
    }
}

/// Computes the full diagnostics record for a body under `law`. `t` and
/// `dt` are echoed into the record; `vol0` anchors the drift. Pure: equal
/// inputs give bit-equal records.
pub fn snapshot(
    body: &SupportField,
    law: &SpeedLaw,
    t: f64,
    dt: f64,
    vol0: f64,
) -> Result<DiagnosticsRecord, DiagError> {
    let n = body.ambient_n();
    if law.n() != n {
        return Err(AlgebraError::DimensionMismatch {
            expected: n,
            actual: law.n(),
        }
        .into());
    }
    let k = law.k();
    let radii = body.radii()?;
    let g = body.grid();
    let len = body.len();

    let mut sigma = vec![0.0; len];
    let mut buf = [0.0f64; 2];
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..len {
        let rj = radii.node(j, &mut buf);
        sigma[j] = algebra::speed_from_radii(rj, law)?;
        let en = radii.node_elem(j, n);
        num += g.weights[j] * sigma[j] * en;
        den += g.weights[j] * en;
    }
    let h = num / den;
    let area = den;

    let mut sigma_min = f64::INFINITY;
    let mut sigma_max = f64::NEG_INFINITY;
    let mut l2 = 0.0;
    let mut balance = 0.0;
    let h_k = if law.alpha() == 1.0 {
        h
    } else {
        h.powf(1.0 / law.alpha())
    };
    for j in 0..len {
        let en = radii.node_elem(j, n);
        let dev = sigma[j] - h;
        sigma_min = sigma_min.min(sigma[j]);
        sigma_max = sigma_max.max(sigma[j]);
        l2 += g.weights[j] * dev * dev * en;
        let ek = radii.node_elem(j, n - k) / en;
        balance += g.weights[j] * dev * (ek - h_k) * en;
    }
    balance *= -(k as f64);

    let lambda_min = 1.0 / radii.max();
    let lambda_max = 1.0 / radii.margin;

    let mixed_volumes = body.mixed_volumes_given(&radii);
    let volume = mixed_volumes[n + 1];
    let iso_ratio = iso_ratio_from_mixed(&mixed_volumes, n, k);
    let curvature_integral_km1 = body.curvature_integral_given(&radii, k - 1)?;
    let minkowski_res_0 = body.minkowski_residual_given(&radii, 0)?;

    let bounds = body.radii_bounds()?;
    let fit = body.hausdorff_to_ball()?;

    let ros_deficit = if n >= 2 {
        Some(body.ros_deficit_given(&radii)?)
    } else {
        None
    };
    let ros_l1 = if n == 2 && k == 2 {
        let integral = g.integrate(|j| {
            let e2 = 1.0 / radii.node_elem(j, n);
            (1.0 / e2.sqrt() - 1.0 / h_k.sqrt()).abs() * radii.node_elem(j, n)
        });
        Some(integral)
    } else {
        None
    };

    Ok(DiagnosticsRecord {
        t,
        dt,
        volume,
        area,
        mixed_volumes,
        h,
        sigma_min,
        sigma_max,
        lambda_min,
        lambda_max,
        l2_deviation: l2,
        iso_ratio,
        curvature_integral_km1,
        balance_rhs: balance,
        r_minus: bounds.r_minus,
        r_plus: bounds.r_plus,
        hausdorff_ball: fit.distance,
        ball_radius: fit.radius,
        minkowski_res_0,
        ros_deficit,
        ros_l1,
        volume_drift: (volume - vol0) / vol0,
    })
}

// ---------------------------------------------------------------------------
// CSV codec

const FIXED_HEAD: [&str; 4] = ["t", "dt", "volume", "area"];
const FIXED_TAIL: [&str; 18] = [
    "h",
    "sigma_min",
    "sigma_max",
    "lambda_min",
    "lambda_max",
    "l2_deviation",
    "iso_ratio",
    "curvature_integral_km1",
    "balance_rhs",
    "R_minus",
    "R_plus",
    "hausdorff_ball",
    "ball_radius",
    "minkowski_res_0",
    "ros_deficit",
    "ros_l1",
    "volume_drift",
    "", // placeholder so the array is fixed-size; never emitted
];

fn tail_names() -> &'static [&'static str] {
    &FIXED_TAIL[..17]
}

/// Header line for a backend of hypersurface dimension n.
pub fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = FIXED_HEAD.iter().map(|s| s.to_string()).collect();
    for i in 0..=(n + 1) {
        cols.push(format!("V_{i}"));
    }
    cols.extend(tail_names().iter().map(|s| s.to_string()));
    cols.join(",")
}

fn push_f64(out: &mut String, v: f64) {
    // Shortest round-trip formatting: parsing the text recovers the exact
    // bits, which keeps report regeneration byte-identical.
    out.push_str(&format!("{v}"));
}

/// One CSV row (no trailing newline).
pub fn record_to_csv_row(rec: &DiagnosticsRecord) -> String {
    let mut out = String::with_capacity(512);
    push_f64(&mut out, rec.t);
    for v in [rec.dt, rec.volume, rec.area] {
        out.push(',');
        push_f64(&mut out, v);
    }
    for &v in &rec.mixed_volumes {
        out.push(',');
        push_f64(&mut out, v);
    }
    for v in [
        rec.h,
        rec.sigma_min,
        rec.sigma_max,
        rec.lambda_min,
        rec.lambda_max,
        rec.l2_deviation,
        rec.iso_ratio,
        rec.curvature_integral_km1,
        rec.balance_rhs,
        rec.r_minus,
        rec.r_plus,
        rec.hausdorff_ball,
        rec.ball_radius,
        rec.minkowski_res_0,
    ] {
        out.push(',');
        push_f64(&mut out, v);
    }
    out.push(',');
    if let Some(v) = rec.ros_deficit {
        push_f64(&mut out, v);
    }
    out.push(',');
    if let Some(v) = rec.ros_l1 {
        push_f64(&mut out, v);
    }
    out.push(',');
    push_f64(&mut out, rec.volume_drift);
    out
}

/// Serializes records to CSV (with header); `n` is the hypersurface
/// dimension.
pub fn records_to_csv(n: usize, records: &[DiagnosticsRecord]) -> String {
    let mut out = csv_header(n);
    out.push('\n');
    for rec in records {
        out.push_str(&record_to_csv_row(rec));
        out.push('\n');
    }
    out
}

/// Parses records back from CSV, recovering the exact f64 bits written by
/// [`records_to_csv`]. Returns (n, records).
pub fn records_from_csv(text: &str) -> Result<(usize, Vec<DiagnosticsRecord>), DiagError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DiagError::Parse {
        line: 1,
        msg: "empty csv".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let n_v = cols.iter().filter(|c| c.starts_with("V_")).count();
    if n_v < 3 {
        return Err(DiagError::Parse {
            line: 1,
            msg: "expected at least V_0, V_1, V_2 columns".into(),
        });
    }
    let n = n_v - 2;
    if cols != csv_header(n).split(',').collect::<Vec<_>>() {
        return Err(DiagError::Parse {
            line: 1,
            msg: "header does not match the diagnostics schema".into(),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(DiagError::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let req = |i: usize| -> Result<f64, DiagError> {
            fields[i].parse().map_err(|_| DiagError::Parse {
                line: lineno,
                msg: format!("invalid number {:?} in column {}", fields[i], cols[i]),
            })
        };
        let opt = |i: usize| -> Result<Option<f64>, DiagError> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                req(i).map(Some)
            }
        };
        let mut mixed_volumes = Vec::with_capacity(n + 2);
        for i in 0..=(n + 1) {
            mixed_volumes.push(req(4 + i)?);
        }
        let b = 4 + n + 2;
        records.push(DiagnosticsRecord {
            t: req(0)?,
            dt: req(1)?,
            volume: req(2)?,
            area: req(3)?,
            mixed_volumes,
            h: req(b)?,
            sigma_min: req(b + 1)?,
            sigma_max: req(b + 2)?,
            lambda_min: req(b + 3)?,
            lambda_max: req(b + 4)?,
            l2_deviation: req(b + 5)?,
            iso_ratio: req(b + 6)?,
            curvature_integral_km1: req(b + 7)?,
            balance_rhs: req(b + 8)?,
            r_minus: req(b + 9)?,
            r_plus: req(b + 10)?,
            hausdorff_ball: req(b + 11)?,
            ball_radius: req(b + 12)?,
            minkowski_res_0: req(b + 13)?,
            ros_deficit: opt(b + 14)?,
            ros_l1: opt(b + 15)?,
            volume_drift: req(b + 16)?,
        });
    }
    Ok((n, records))
}

// ---------------------------------------------------------------------------
// Audits

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Result of one audit over a recorded trajectory.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Audit {
    pub name: String,
    pub verdict: Verdict,
    /// Magnitude of the worst violation found (0 when clean).
    pub worst_violation: f64,
    /// Record index of the worst violation.
    pub worst_index: Option<usize>,
    /// Named scalars backing the verdict (fit slopes, extremes, counts).
    pub stats: Vec<(String, f64)>,
    pub note: String,
}

impl Audit {
    fn passing(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// Per-field slack derived from a paired coarse-resolution run; fields not
/// covered default to zero (pure relative slack).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct MonotoneAllowance {
    pub curvature_integral: f64,
    pub iso_ratio: f64,
    pub ros: f64,
}

fn interp(records: &[DiagnosticsRecord], t: f64, field: impl Fn(&DiagnosticsRecord) -> f64) -> Option<f64> {
    if records.is_empty() || t < records[0].t || t > records[records.len() - 1].t {
        return None;
    }
    let pos = records.partition_point(|r| r.t <= t);
    if pos == 0 {
        return Some(field(&records[0]));
    }
    if pos >= records.len() {
        return Some(field(&records[records.len() - 1]));
    }
    let (a, b) = (&records[pos - 1], &records[pos]);
    if b.t <= a.t {
        return Some(field(a));
    }
    let w = (t - a.t) / (b.t - a.t);
    Some(field(a) * (1.0 - w) + field(b) * w)
}

/// Estimates the discretization error of the monotone-audited fields by
/// comparing a run against its paired coarse-resolution companion: the
/// max interpolated difference bounds the coarse error, which in turn
/// dominates the fine error for any first-order-or-better scheme.
pub fn discretization_allowance(
    fine: &[DiagnosticsRecord],
    coarse: &[DiagnosticsRecord],
) -> MonotoneAllowance {
    let spread = |field: fn(&DiagnosticsRecord) -> f64| -> f64 {
        let mut worst = 0.0f64;
        for rec in fine {
            if let Some(c) = interp(coarse, rec.t, field) {
                worst = worst.max((field(rec) - c).abs());
            }
        }
        worst
    };
    MonotoneAllowance {
        curvature_integral: spread(|r| r.curvature_integral_km1),
        iso_ratio: spread(|r| r.iso_ratio),
        ros: spread(|r| r.ros_deficit.unwrap_or(0.0))
            .max(spread(|r| r.ros_l1.unwrap_or(0.0))),
    }
}

fn monotone_worst(
    records: &[DiagnosticsRecord],
    field: impl Fn(&DiagnosticsRecord) -> f64,
    allowance: f64,
) -> (f64, Option<usize>) {
    let mut worst = 0.0f64;
    let mut at = None;
    for i in 1..records.len() {
        let prev = field(&records[i - 1]);
        let cur = field(&records[i]);
        let slack = MONOTONE_REL_SLACK * prev.abs() + allowance;
        let violation = cur - prev - slack;
        if violation > worst {
            worst = violation;
            at = Some(i);
        }
    }
    (worst, at)
}

/// Checks that the curvature integral of E_{k-1} and the isoperimetric
/// ratio are non-increasing along the records, within a relative slack plus
/// the measured discretization allowance.
pub fn audit_monotone(records: &[DiagnosticsRecord], allowance: &MonotoneAllowance) -> Audit {
    if records.len() < 2 {
        return Audit {
            name: "monotone".into(),
            verdict: Verdict::NotApplicable,
            worst_violation: 0.0,
            worst_index: None,
            stats: vec![],
            note: "fewer than two records".into(),
        };
    }
    let (w_ci, at_ci) = monotone_worst(
        records,
        |r| r.curvature_integral_km1,
        allowance.curvature_integral,
    );
    let (w_iso, at_iso) = monotone_worst(records, |r| r.iso_ratio, allowance.iso_ratio);
    let (worst_violation, worst_index) = if w_ci >= w_iso {
        (w_ci, at_ci)
    } else {
        (w_iso, at_iso)
    };
    Audit {
        name: "monotone".into(),
        verdict: if worst_violation > 0.0 {
            Verdict::Fail
        } else {
            Verdict::Pass
        },
        worst_violation,
        worst_index,
        stats: vec![
            ("curvature_integral_violation".into(), w_ci),
            ("iso_ratio_violation".into(), w_iso),
            (
                "allowance_curvature_integral".into(),
                allowance.curvature_integral,
            ),
            ("allowance_iso_ratio".into(), allowance.iso_ratio),
        ],
        note: "curvature integral of E_{k-1} and isoperimetric ratio must not increase".into(),
    }
}

/// Nonuniform centered three-point first derivative at t_i.
fn centered_derivative(
    tm: f64,
    t0: f64,
    tp: f64,
    fm: f64,
    f0: f64,
    fp: f64,
) -> f64 {
    let dm = t0 - tm;
    let dp = tp - t0;
    (fp * dm * dm - fm * dp * dp + f0 * (dp * dp - dm * dm)) / (dp * dm * (dp + dm))
}

/// Checks the dissipation identity: the centered finite-difference time
/// derivative of the recorded curvature integral must match the recorded
/// balance integrand within [`BALANCE_REL_TOL`], at records whose L2
/// deviation exceeds the backend floor ([`BALANCE_L2_FLOOR`] on the circle,
/// [`BALANCE_L2_FLOOR_POLAR`] on the polar grid).
pub fn audit_balance(records: &[DiagnosticsRecord]) -> Audit {
    let mut worst = 0.0f64;
    let mut at = None;
    let mut checked = 0usize;
    for i in 1..records.len().saturating_sub(1) {
        let (rm, r0, rp) = (&records[i - 1], &records[i], &records[i + 1]);
        let floor = if r0.ambient_n() == 1 {
            BALANCE_L2_FLOOR
        } else {
            BALANCE_L2_FLOOR_POLAR
        };
        if r0.l2_deviation <= floor || rm.l2_deviation <= floor || rp.l2_deviation <= floor {
            continue;
        }
        if !(rp.t > r0.t && r0.t > rm.t) {
            continue;
        }
        // Skip intervals the record spacing cannot resolve: estimate the
        // local decay rate from the L2 deviation and predict the centered
        // difference's truncation error.
        let rate = ((rm.l2_deviation / rp.l2_deviation).ln() / (rp.t - rm.t)).abs();
        let predicted = rate * rate * (r0.t - rm.t) * (rp.t - r0.t) / 6.0;
        if !(predicted <= BALANCE_REL_TOL * BALANCE_RESOLUTION_FRACTION) {
            continue;
        }
        let fd = centered_derivative(
            rm.t,
            r0.t,
            rp.t,
            rm.curvature_integral_km1,
            r0.curvature_integral_km1,
            rp.curvature_integral_km1,
        );
        let mismatch = (fd - r0.balance_rhs).abs() / r0.balance_rhs.abs();
        checked += 1;
        if mismatch > worst {
            worst = mismatch;
            at = Some(i);
        }
    }
    if checked < 3 {
        return Audit {
            name: "balance".into(),
            verdict: Verdict::NotApplicable,
            worst_violation: 0.0,
            worst_index: None,
            stats: vec![("checked".into(), checked as f64)],
            note: "not enough resolved records above the L2 floor".into(),
        };
    }
    Audit {
        name: "balance".into(),
        verdict: if worst <= BALANCE_REL_TOL {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        worst_violation: (worst - BALANCE_REL_TOL).max(0.0),
        worst_index: at,
        stats: vec![
            ("max_rel_mismatch".into(), worst),
            ("checked".into(), checked as f64),
            ("tolerance".into(), BALANCE_REL_TOL),
        ],
        note: "d/dt of the curvature integral must match the recorded dissipation".into(),
    }
}

/// Checks the curvature pinching bound: lambda_min(t) must stay above
/// 1 / (1/lambda_min(0) + h* t) with h* the running maximum of h, up to
/// [`PINCHING_SLACK`] relative slack.
pub fn audit_pinching(records: &[DiagnosticsRecord]) -> Audit {
    if records.is_empty() {
        return Audit {
            name: "pinching".into(),
            verdict: Verdict::NotApplicable,
            worst_violation: 0.0,
            worst_index: None,
            stats: vec![],
            note: "no records".into(),
        };
    }
    let lambda0 = records[0].lambda_min;
    let t0 = records[0].t;
    let mut h_star = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    let mut at = None;
    let mut min_margin = f64::INFINITY;
    for (i, rec) in records.iter().enumerate() {
        h_star = h_star.max(rec.h);
        let bound = 1.0 / (1.0 / lambda0 + h_star * (rec.t - t0));
        let violation = (bound * (1.0 - PINCHING_SLACK) - rec.lambda_min) / bound;
        min_margin = min_margin.min((rec.lambda_min - bound * (1.0 - PINCHING_SLACK)) / bound);
        if violation > worst {
            worst = violation;
            at = Some(i);
        }
    }
    Audit {
        name: "pinching".into(),
        verdict: if worst > 0.0 {
            Verdict::Fail
        } else {
            Verdict::Pass
        },
        worst_violation: worst,
        worst_index: at,
        stats: vec![
            ("min_relative_margin".into(), min_margin),
            ("h_star".into(), h_star),
            ("lambda_min_initial".into(), lambda0),
        ],
        note: "lambda_min must respect the closed-form pinching lower bound".into(),
    }
}

/// Simple least-squares line fit returning (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return (0.0, my, 1.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Indices of the records whose `value` lies in the final decade
/// [max(final, floor), 10 * max(final, floor)].
fn final_decade_window(values: &[f64], floor: f64) -> Vec<usize> {
    let last = *values.last().unwrap_or(&0.0);
    let lo = last.max(floor);
    let hi = 10.0 * lo;
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= lo && v <= hi)
        .map(|(i, _)| i)
        .collect()
}

/// Tolerances for the decay audit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DecayExpectations {
    /// Final L2 deviation must fall below this.
    pub l2_final: f64,
    /// Final Hausdorff distance to the best ball must fall below this.
    pub roundness_tol: f64,
    /// |final ball radius - volume-matched radius| must fall below this.
    pub ball_tol: f64,
    /// |relative volume drift| budget at the end of the run.
    pub drift_budget: f64,
}

impl Default for DecayExpectations {
    fn default() -> Self {
        DecayExpectations {
            l2_final: 1e-6,
            roundness_tol: 1e-3,
            ball_tol: 1e-3,
            drift_budget: 1e-4,
        }
    }
}

/// Radius of the ball with volume `vol` in R^{n+1}.
pub fn volume_matched_radius(n: usize, vol: f64) -> f64 {
    (vol / ball_volume_constant(n)).powf(1.0 / (n as f64 + 1.0))
}

/// Checks convergence to the volume-matched ball: the L2 deviation decays
/// below its threshold, log(R+ - R-) decreases linearly (negative slope,
/// R^2 >= [`DECAY_MIN_R2`]) over the final decade above the measurement
/// floor, and the terminal state matches the ball of the initial volume.
pub fn audit_decay(records: &[DiagnosticsRecord], exp: &DecayExpectations) -> Audit {
    if records.len() < 2 {
        return Audit {
            name: "decay".into(),
            verdict: Verdict::NotApplicable,
            worst_violation: 0.0,
            worst_index: None,
            stats: vec![],
            note: "fewer than two records".into(),
        };
    }
    let first = &records[0];
    let last = &records[records.len() - 1];
    let n = first.ambient_n();
    let vol0 = first.volume;

    let mut stats = Vec::new();
    let mut failures = Vec::new();

    // (a) L2 decay.
    stats.push(("l2_initial".into(), first.l2_deviation));
    stats.push(("l2_final".into(), last.l2_deviation));
    if !(last.l2_deviation < exp.l2_final) {
        failures.push(format!(
            "final L2 deviation {:.3e} is not below {:.3e}",
            last.l2_deviation, exp.l2_final
        ));
    }
    if records.len() > 1 && !(last.l2_deviation < first.l2_deviation) && first.l2_deviation > 0.0 {
        failures.push("L2 deviation did not decrease".into());
    }

    // (b) Exponential decay of the in/out gap over its final decade.
    let gaps: Vec<f64> = records.iter().map(|r| r.r_plus - r.r_minus).collect();
    let floor = 1e-12 * first.r_plus.abs().max(1.0);
    let window = final_decade_window(&gaps, floor);
    let fit_applicable = window.len() >= 5 && gaps[0] > 10.0 * floor;
    let mut slope = 0.0;
    let mut r2 = 1.0;
    if fit_applicable {
        let xs: Vec<f64> = window.iter().map(|&i| records[i].t).collect();
        let ys: Vec<f64> = window.iter().map(|&i| gaps[i].ln()).collect();
        let (s, _, r) = linear_fit(&xs, &ys);
        slope = s;
        r2 = r;
        if !(slope < 0.0) {
            failures.push(format!("gap fit slope {slope:.3e} is not negative"));
        }
        if !(r2 >= DECAY_MIN_R2) {
            failures.push(format!("gap fit R^2 {r2:.4} below {DECAY_MIN_R2}"));
        }
    }
    stats.push(("fit_points".into(), window.len() as f64));
    stats.push(("fit_slope".into(), slope));
    stats.push(("fit_r2".into(), r2));
    stats.push(("gap_final".into(), *gaps.last().unwrap()));

    // (c) Terminal state: volume held, shape within tolerance of the
    // volume-matched ball.
    let r_expected = volume_matched_radius(n, vol0);
    let radius_err = (last.ball_radius - r_expected).abs();
    stats.push(("final_drift".into(), last.volume_drift));
    stats.push(("final_hausdorff".into(), last.hausdorff_ball));
    stats.push(("radius_error".into(), radius_err));
    stats.push(("radius_expected".into(), r_expected));
    if !(last.volume_drift.abs() <= exp.drift_budget) {
        failures.push(format!(
            "final volume drift {:.3e} exceeds budget {:.3e}",
            last.volume_drift, exp.drift_budget
        ));
    }
    if !(last.hausdorff_ball <= exp.roundness_tol) {
        failures.push(format!(
            "final Hausdorff distance {:.3e} exceeds {:.3e}",
            last.hausdorff_ball, exp.roundness_tol
        ));
    }
    if !(radius_err <= exp.ball_tol) {
        failures.push(format!(
            "final ball radius is {radius_err:.3e} from the volume-matched radius"
        ));
    }

    Audit {
        name: "decay".into(),
        verdict: if failures.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        worst_violation: failures.len() as f64,
        worst_index: None,
        stats,
        note: if failures.is_empty() {
            if fit_applicable {
                "converged to the volume-matched ball with exponential gap decay".into()
            } else {
                "converged; gap already at the measurement floor, fit skipped".into()
            }
        } else {
            failures.join("; ")
        },
    }
}

/// Checks the Ros sequence on n = 2, k = 2 trajectories: the recorded Ros
/// deficit stays above -1e-6 and both the deficit and the L1 distance of
/// E_2^{-1/2} to its mean decrease over their final decade.
pub fn audit_ros_sequence(records: &[DiagnosticsRecord], allowance: &MonotoneAllowance) -> Audit {
    let applicable = records
        .iter()
        .all(|r| r.ros_deficit.is_some() && r.ros_l1.is_some())
        && records.len() >= 2;
    if !applicable {
        return Audit {
            name: "ros_sequence".into(),
            verdict: Verdict::NotApplicable,
            worst_violation: 0.0,
            worst_index: None,
            stats: vec![],
            note: "requires an n = 2, k = 2 trajectory with Ros fields".into(),
        };
    }
    let deficits: Vec<f64> = records.iter().map(|r| r.ros_deficit.unwrap()).collect();
    let l1s: Vec<f64> = records.iter().map(|r| r.ros_l1.unwrap()).collect();

    let mut worst = 0.0f64;
    let mut at = None;
    let mut failures = Vec::new();

    // Positivity up to quadrature noise.
    for (i, &d) in deficits.iter().enumerate() {
        let violation = -1e-6 - d;
        if violation > worst {
            worst = violation;
            at = Some(i);
        }
    }
    if worst > 0.0 {
        failures.push("ros deficit fell below -1e-6".to_string());
    }

    // Eventual decrease over the final decade of each sequence.
    let mut check_tail = |name: &str, values: &[f64]| {
        let floor = 1e-14 * values[0].abs().max(1.0);
        let window = final_decade_window(values, floor);
        if window.len() < 3 {
            return;
        }
        for w in 1..window.len() {
            let (i0, i1) = (window[w - 1], window[w]);
            let slack = MONOTONE_REL_SLACK * values[i0].abs() + allowance.ros;
            let violation = values[i1] - values[i0] - slack;
            if violation > worst {
                worst = violation;
                at = Some(i1);
                failures.push(format!("{name} increased in its final decade"));
            }
        }
    };
    check_tail("ros_deficit", &deficits);
    check_tail("ros_l1", &l1s);

    Audit {
        name: "ros_sequence".into(),
        verdict: if failures.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        worst_violation: worst.max(0.0),
        worst_index: at,
        stats: vec![
            ("ros_deficit_final".into(), *deficits.last().unwrap()),
            ("ros_l1_final".into(), *l1s.last().unwrap()),
            ("ros_deficit_min".into(), deficits.iter().cloned().fold(f64::INFINITY, f64::min)),
        ],
        note: if failures.is_empty() {
            "ros sequence nonnegative and eventually decreasing".into()
        } else {
            failures.join("; ")
        },
    }
}

/// Context for assembling the full audit report of a run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AuditContext {
    pub law: SpeedLaw,
    pub allowance: MonotoneAllowance,
    /// Whether the run was configured to converge (enables the decay audit).
    pub expect_convergence: bool,
    pub decay: DecayExpectations,
}

/// Full audit report; serializes to deterministic JSON.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AuditReport {
    pub context: AuditContext,
    pub audits: Vec<Audit>,
    /// True when no applicable audit failed.
    pub all_pass: bool,
}

/// Runs every audit on the records. The decay audit is reported but marked
/// not-applicable unless `ctx.expect_convergence` is set.
pub fn audit_suite(records: &[DiagnosticsRecord], ctx: &AuditContext) -> AuditReport {
    let mut audits = vec![
        audit_monotone(records, &ctx.allowance),
        audit_balance(records),
        audit_pinching(records),
    ];
    let mut decay = audit_decay(records, &ctx.decay);
    if !ctx.expect_convergence && decay.verdict != Verdict::NotApplicable {
        decay.verdict = Verdict::NotApplicable;
        decay.note = format!("not expected to converge; measured anyway: {}", decay.note);
    }
    audits.push(decay);
    audits.push(audit_ros_sequence(records, &ctx.allowance));
    let all_pass = audits.iter().all(|a| a.passing());
    AuditReport {
        context: ctx.clone(),
        audits,
        all_pass,
    }
}

impl AuditReport {
    /// Deterministic JSON rendering (fixed field order, shortest-round-trip
    /// floats), terminated by a newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("audit report serializes");
        s.push('\n');
        s
    }
}

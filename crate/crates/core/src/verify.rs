//! Randomized self-verification suites.
//!
//! Each suite draws reproducible random samples (curvature vectors or
//! convex bodies), evaluates a family of identities and inequalities that
//! must hold for every sample, and reports the worst violation per check
//! against a pinned tolerance. The `Corruption` switch deliberately
//! miscomputes one identity so callers can confirm the harness actually
//! detects broken math (a failing run is the expected outcome there).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{self, SpeedLaw};
use crate::body::{make_body, Backend, ShapeSpec, SupportField};

/// Deliberate defect injected into a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corruption {
    #[default]
    None,
    /// Flip the sign of the E_{k+1} term in the derivative identity.
    SignError,
}

/// One verified property: `passed` iff `worst <= tol`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Worst violation seen over all samples (relative, dimensionless).
    pub worst: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Accumulates the worst violation per named check.
struct Tally {
    checks: Vec<(String, f64, f64)>,
}

impl Tally {
    fn new() -> Tally {
        Tally { checks: Vec::new() }
    }

    fn record(&mut self, name: &str, violation: f64, tol: f64) {
        let violation = if violation.is_nan() {
            f64::INFINITY
        } else {
            violation
        };
        for c in &mut self.checks {
            if c.0 == name {
                c.1 = c.1.max(violation);
                return;
            }
        }
        self.checks.push((name.to_string(), violation, tol));
    }

    fn outcome(self, suite: &str, seed: u64, samples: usize) -> SuiteOutcome {
        let checks: Vec<Check> = self
            .checks
            .into_iter()
            .map(|(name, worst, tol)| Check {
                passed: worst <= tol,
                name,
                worst,
                tol,
            })
            .collect();
        let passed = checks.iter().all(|c| c.passed);
        SuiteOutcome {
            suite: suite.to_string(),
            seed,
            samples,
            checks,
            passed,
        }
    }
}

fn random_lambda(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Log-uniform over [0.1, 10]: exercises three orders of magnitude of
    // anisotropy without leaving the well-conditioned regime.
    (0..n)
        .map(|_| {
            let t: f64 = rng.gen();
            (0.1f64.ln() + t * (10.0f64.ln() - 0.1f64.ln())).exp()
        })
        .collect()
}

const ALGEBRA_TOL: f64 = 1e-11;

/// Pointwise curvature-algebra identities on random vectors in the
/// positive cone, for dimensions n = 1..=5 and all orders 1 <= k <= n.
pub fn verify_algebra(seed: u64, samples: usize, corruption: Corruption) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    let alphas = [0.5, 1.0, 2.0];

    for s in 0..samples {
        let n = 1 + s % 5;
        let lambda = random_lambda(&mut rng, n);
        let h: f64 = lambda.iter().sum();

        for k in 1..=n {
            let alpha = alphas[(s + k) % alphas.len()];
            let law = SpeedLaw::new(n, k, alpha).expect("valid law");
            let plain = SpeedLaw::new(n, k, 1.0).expect("valid law");

            let ek = algebra::elem_sym(&lambda, k).unwrap();
            let ek1 = algebra::elem_sym(&lambda, k + 1).unwrap();
            let grad_ek = algebra::speed_grad(&lambda, &plain).unwrap();
            let lhs: f64 = grad_ek
                .iter()
                .zip(&lambda)
                .map(|(g, l)| g * l * l)
                .sum();

            // Sum_i dE_k/dlambda_i lambda_i^2 = H E_k - (k+1) E_{k+1}.
            let sign = match corruption {
                Corruption::None => -1.0,
                Corruption::SignError => 1.0,
            };
            let rhs = h * ek + sign * (k as f64 + 1.0) * ek1;
            let scale = h * ek + (k as f64 + 1.0) * ek1.abs() + f64::MIN_POSITIVE;
            tally.record(
                "derivative_identity",
                (lhs - rhs).abs() / scale,
                ALGEBRA_TOL,
            );

            // ... and is bounded below by (k/n) H E_k.
            tally.record(
                "derivative_lower_bound",
                ((k as f64 / n as f64) * h * ek - lhs) / (h * ek),
                ALGEBRA_TOL,
            );

            // Euler relation <grad sigma, lambda> = alpha k sigma.
            let sigma = algebra::speed(&lambda, &law).unwrap();
            let grad = algebra::speed_grad(&lambda, &law).unwrap();
            let euler: f64 = grad.iter().zip(&lambda).map(|(g, l)| g * l).sum();
            tally.record(
                "euler_relation",
                (euler - alpha * k as f64 * sigma).abs() / (alpha * k as f64 * sigma),
                ALGEBRA_TOL,
            );

            // Homogeneity sigma(c lambda) = c^{alpha k} sigma(lambda).
            let c: f64 = 0.5 + 1.5 * rng.gen::<f64>();
            let scaled: Vec<f64> = lambda.iter().map(|l| c * l).collect();
            let sigma_scaled = algebra::speed(&scaled, &law).unwrap();
            let expected = c.powf(alpha * k as f64) * sigma;
            tally.record(
                "homogeneity",
                (sigma_scaled - expected).abs() / expected,
                ALGEBRA_TOL,
            );

            // Radii route: E_k(1/r) = E_{n-k}(r) / E_n(r).
            let radii: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
            let via_radii = algebra::speed_from_radii(&radii, &law).unwrap();
            tally.record(
                "reciprocal_radii",
                (via_radii - sigma).abs() / sigma,
                ALGEBRA_TOL,
            );

            // The library's own residual bundle agrees.
            let residuals = algebra::identity_residuals(&lambda, &law).unwrap();
            tally.record("residual_bundle", residuals.max(), ALGEBRA_TOL);

            // Concavity of the 1-homogeneous ratio along random segments.
            let other = random_lambda(&mut rng, n);
            let radii_b: Vec<f64> = other.iter().map(|l| 1.0 / l).collect();
            let mid: Vec<f64> = radii
                .iter()
                .zip(&radii_b)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let phi_mid = algebra::phi(&mid, &law).unwrap();
            let phi_avg = 0.5
                * (algebra::phi(&radii, &law).unwrap() + algebra::phi(&radii_b, &law).unwrap());
            tally.record(
                "ratio_concavity",
                (phi_avg - phi_mid) / phi_mid,
                ALGEBRA_TOL,
            );
        }

        // Maclaurin chain on normalized symmetric functions.
        for j in 1..n {
            let a = algebra::norm_sym(&lambda, j).unwrap().powf(1.0 / j as f64);
            let b = algebra::norm_sym(&lambda, j + 1)
                .unwrap()
                .powf(1.0 / (j + 1) as f64);
            tally.record("maclaurin_chain", (b - a) / a, ALGEBRA_TOL);
        }
    }

    tally.outcome("algebra", seed, samples)
}

fn random_body(rng: &mut ChaCha8Rng, backend: Backend) -> SupportField {
    let resolution = match backend {
        Backend::Circle => 64,
        Backend::Axisymmetric => 96,
    };
    let spec = ShapeSpec::RandomTrig {
        seed: rng.gen(),
        modes: 4,
        margin: 0.2,
    };
    make_body(&spec, backend, resolution).expect("random body construction")
}

/// Discrete-geometry identities on random convex bodies: the quadrature,
/// radii, and mixed volumes must satisfy the exact structural relations of
/// the continuum (Steiner expansion, translation invariance, scaling).
pub fn verify_body(seed: u64, samples: usize) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();

    for s in 0..samples {
        let backend = if s % 2 == 0 {
            Backend::Circle
        } else {
            Backend::Axisymmetric
        };
        let body = random_body(&mut rng, backend);
        let n = body.ambient_n();
        let suffix = match backend {
            Backend::Circle => "circle",
            Backend::Axisymmetric => "polar",
        };

        // Steiner polynomial: Vol(K + tB) = sum_i C(n+1, i) V_{n+1-i} t^i.
        // Matching the t-coefficients uses the Minkowski identities, which
        // the spectral circle quadrature satisfies to roundoff; the polar
        // grid satisfies them to the derivative-stencil order, which on
        // these deliberately rough bodies dominates the residual.
        let steiner_tol = match backend {
            Backend::Circle => 1e-12,
            Backend::Axisymmetric => 1e-5,
        };
        let v = body.mixed_volumes().unwrap();
        for t in [0.1, 0.7] {
            let grown = body.outer_parallel(t).unwrap();
            let vol_grown = grown.volume().unwrap();
            let mut predicted = 0.0;
            for i in 0..=(n + 1) {
                predicted += algebra::binomial(n + 1, i) * v[n + 1 - i] * t.powi(i as i32);
            }
            tally.record(
                &format!("steiner_expansion_{suffix}"),
                (vol_grown - predicted).abs() / vol_grown,
                steiner_tol,
            );
        }

        // Scaling: area ~ c^n, volume ~ c^{n+1}, iso ratio invariant.
        let c = 0.5 + 2.0 * rng.gen::<f64>();
        let scaled = body.scaled(c).unwrap();
        let area_ratio = scaled.area().unwrap() / body.area().unwrap();
        let vol_ratio = scaled.volume().unwrap() / body.volume().unwrap();
        tally.record(
            "scaling_area",
            (area_ratio - c.powi(n as i32)).abs() / c.powi(n as i32),
            1e-12,
        );
        tally.record(
            "scaling_volume",
            (vol_ratio - c.powi(n as i32 + 1)).abs() / c.powi(n as i32 + 1),
            1e-12,
        );
        for k in 1..=n {
            let iso_a = body.iso_ratio(k).unwrap();
            let iso_b = scaled.iso_ratio(k).unwrap();
            tally.record("scaling_iso_invariance", (iso_a - iso_b).abs() / iso_a, 1e-11);
        }

        // Translation moves the support by <v, z> and leaves every
        // functional unchanged (to roundoff on the circle, to the
        // derivative-stencil order on the polar grid).
        let shift = match backend {
            Backend::Circle => [0.1 * rng.gen::<f64>(), 0.1 * rng.gen::<f64>(), 0.0],
            Backend::Axisymmetric => [0.0, 0.0, 0.1 * rng.gen::<f64>()],
        };
        if let Ok(moved) = body.translated(shift) {
            let tol = match backend {
                Backend::Circle => 1e-11,
                Backend::Axisymmetric => 1e-6,
            };
            let va = body.volume().unwrap();
            let vb = moved.volume().unwrap();
            tally.record(
                &format!("translation_invariance_{suffix}"),
                (va - vb).abs() / va,
                tol,
            );
        }

        // Text round trip is bit-exact.
        let back = SupportField::from_text(&body.to_text()).unwrap();
        let exact = back.values() == body.values() && back.backend() == body.backend();
        tally.record("text_round_trip", if exact { 0.0 } else { 1.0 }, 0.5);
    }

    tally.outcome("body", seed, samples)
}

/// Sharp geometric inequalities evaluated on random convex bodies: each
/// must hold with equality only for balls, so random bodies sit strictly
/// inside the feasible region up to quadrature error.
pub fn verify_static_inequalities(seed: u64, samples: usize) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();

    for s in 0..samples {
        let backend = if s % 2 == 0 {
            Backend::Circle
        } else {
            Backend::Axisymmetric
        };
        let body = random_body(&mut rng, backend);
        let n = body.ambient_n();
        let area = body.area().unwrap();
        let vol = body.volume().unwrap();
        let kappa = crate::body::ball_volume_constant(n);

        // Minkowski identities: discretization residual relative to area.
        // Exact to roundoff on the circle; stencil-order limited on the
        // polar grid, where random high-mode bodies are the worst case.
        let (mink_name, mink_tol) = match backend {
            Backend::Circle => ("minkowski_residual_circle", 1e-10),
            Backend::Axisymmetric => ("minkowski_residual_polar", 2e-5),
        };
        for l in 0..n {
            let res = body.minkowski_residual(l).unwrap();
            tally.record(mink_name, res.abs() / area, mink_tol);
        }

        // Isoperimetric ratios are minimized by balls at kappa^k.
        for k in 1..=n {
            let iso = body.iso_ratio(k).unwrap();
            let floor = kappa.powi(k as i32);
            tally.record("iso_ratio_ball_minimum", (floor - iso) / floor, 1e-9);
        }

        // Alexandrov-Fenchel family.
        for m in 1..=(n + 1) {
            for l in (m + 1)..=(n + 1) {
                let deficit = body.af_deficit(m, l).unwrap();
                let scale = kappa.powi(m as i32 - l as i32);
                tally.record("af_deficit_nonnegative", -deficit / scale, 1e-9);
            }
        }

        // Ros inequality (needs n >= 2).
        if n >= 2 {
            let ros = body.ros_deficit().unwrap();
            tally.record("ros_deficit_nonnegative", -ros / vol, 1e-9);
        }

        // The inner ball fits inside the outer ball through the same
        // center family: R- <= R+, and the volume-matched radius sits
        // between them.
        let bounds = body.radii_bounds().unwrap();
        tally.record(
            "radius_ordering",
            (bounds.r_minus - bounds.r_plus) / bounds.r_plus,
            1e-12,
        );
        let r_vol = (vol / kappa).powf(1.0 / (n as f64 + 1.0));
        tally.record(
            "volume_radius_between",
            ((bounds.r_minus - r_vol).max(r_vol - bounds.r_plus)) / r_vol,
            1e-9,
        );
    }

    tally.outcome("static_inequalities", seed, samples)
}

/// Runs every suite with derived seeds; `corruption` only affects the
/// algebra suite.
pub fn verify_all(seed: u64, samples: usize, corruption: Corruption) -> Vec<SuiteOutcome> {
    vec![
        verify_algebra(seed, samples, corruption),
        verify_body(seed ^ 0x9e37_79b9_7f4a_7c15, samples),
        verify_static_inequalities(seed ^ 0x2545_f491_4f6c_dd1d, samples),
    ]
}

//! Elementary symmetric polynomials of principal curvatures and the power
//! speeds sigma = E_k^alpha built on them.
//!
//! Everything here is dimension-generic and restricted to the positive cone
//! Gamma_+ = { lambda : lambda_i > 0 }, where E_k > 0 for every k and the
//! classical identities (Euler homogeneity, Maclaurin ordering, the
//! derivative identities for E_k) hold. The discretized backends only use
//! n = 1 and n = 2, but the algebra is exercised up to much larger n by the
//! verification suites.

use thiserror::Error;

/// Orders up to this bound run the symmetric-polynomial recurrences on a
/// stack buffer; larger ones fall back to a heap buffer.
const STACK_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("empty curvature vector")]
    EmptyInput,
    #[error("entry {index} = {value} is outside the positive cone")]
    NotPositive { index: usize, value: f64 },
    #[error("order k = {k} out of range for n = {n}")]
    OrderOutOfRange { k: usize, n: usize },
    #[error("law expects n = {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid speed law: {0}")]
    InvalidLaw(String),
}

/// The speed law sigma = E_k(lambda)^alpha on n principal curvatures,
/// with 1 <= k <= n and alpha > 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpeedLaw {
    n: usize,
    k: usize,
    alpha: f64,
}

impl SpeedLaw {
    pub fn new(n: usize, k: usize, alpha: f64) -> Result<Self, AlgebraError> {
        if n == 0 {
            return Err(AlgebraError::InvalidLaw("n >= 1 required".into()));
        }
        if k == 0 || k > n {
            return Err(AlgebraError::InvalidLaw(format!(
                "k must satisfy 1 <= k <= n, got k = {k}, n = {n}"
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(AlgebraError::InvalidLaw(format!(
                "alpha > 0 required, got {alpha}"
            )));
        }
        Ok(SpeedLaw { n, k, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Homogeneity degree of sigma in lambda: alpha * k.
    pub fn degree(&self) -> f64 {
        self.alpha * self.k as f64
    }
}

/// Binomial coefficient as f64 (exact for every value representable here).
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is always divisible by (i + 1) at this point.
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

fn check_cone(lambda: &[f64]) -> Result<(), AlgebraError> {
    if lambda.is_empty() {
        return Err(AlgebraError::EmptyInput);
    }
    for (index, &value) in lambda.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(AlgebraError::NotPositive { index, value });
        }
    }
    Ok(())
}

/// Core recurrence: fills `e[0..=k]` with E_0..E_k of `lambda`, optionally
/// skipping one entry. `e` must hold k + 1 slots. Cost O(n k), numerically
/// stable on the positive cone (all additions of positive terms).
fn elem_sym_prefix(lambda: &[f64], k: usize, skip: Option<usize>, e: &mut [f64]) {
    e[..=k].fill(0.0);
    e[0] = 1.0;
    let mut absorbed = 0usize;
    for (i, &l) in lambda.iter().enumerate() {
        if skip == Some(i) {
            continue;
        }
        absorbed += 1;
        let top = k.min(absorbed);
        for j in (1..=top).rev() {
            e[j] += l * e[j - 1];
        }
    }
}

fn with_prefix<R>(lambda: &[f64], k: usize, skip: Option<usize>, f: impl FnOnce(&[f64]) -> R) -> R {
    if k < STACK_ORDER {
        let mut buf = [0.0f64; STACK_ORDER];
        elem_sym_prefix(lambda, k, skip, &mut buf);
        f(&buf[..=k])
    } else {
        let mut buf = vec![0.0f64; k + 1];
        elem_sym_prefix(lambda, k, skip, &mut buf);
        f(&buf)
    }
}

/// Elementary symmetric polynomial E_k(lambda). By convention E_0 = 1 and
/// E_{n+1} = 0; k beyond n + 1 is rejected.
pub fn elem_sym(lambda: &[f64], k: usize) -> Result<f64, AlgebraError> {
    check_cone(lambda)?;
    let n = lambda.len();
    if k > n + 1 {
        return Err(AlgebraError::OrderOutOfRange { k, n });
    }
    if k == n + 1 {
        return Ok(0.0);
    }
    Ok(with_prefix(lambda, k, None, |e| e[k]))
}

/// Normalized polynomial E_k / binom(n, k), so that norm_sym(lambda, k) = c^k
/// on the isotropic point lambda = (c, ..., c).
pub fn norm_sym(lambda: &[f64], k: usize) -> Result<f64, AlgebraError> {
    check_cone(lambda)?;
    let n = lambda.len();
    if k > n {
        return Err(AlgebraError::OrderOutOfRange { k, n });
    }
    Ok(with_prefix(lambda, k, None, |e| e[k]) / binomial(n, k))
}

fn law_checked<'a>(lambda: &'a [f64], law: &SpeedLaw) -> Result<&'a [f64], AlgebraError> {
    check_cone(lambda)?;
    if lambda.len() != law.n() {
        return Err(AlgebraError::DimensionMismatch {
            expected: law.n(),
            actual: lambda.len(),
        });
    }
    Ok(lambda)
}

/// Speed sigma = E_k(lambda)^alpha.
pub fn speed(lambda: &[f64], law: &SpeedLaw) -> Result<f64, AlgebraError> {
    let lambda = law_checked(lambda, law)?;
    let ek = with_prefix(lambda, law.k(), None, |e| e[law.k()]);
    Ok(powf_fast(ek, law.alpha()))
}

#[inline]
fn powf_fast(x: f64, a: f64) -> f64 {
    if a == 1.0 {
        x
    } else {
        x.powf(a)
    }
}

/// Gradient d sigma / d lambda_i = alpha E_k^{alpha-1} dE_k/dlambda_i, using
/// dE_k/dlambda_i = E_{k-1}(lambda with entry i removed).
pub fn speed_grad(lambda: &[f64], law: &SpeedLaw) -> Result<Vec<f64>, AlgebraError> {
    let mut out = vec![0.0; lambda.len()];
    speed_grad_into(lambda, law, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`speed_grad`] for hot loops.
pub fn speed_grad_into(
    lambda: &[f64],
    law: &SpeedLaw,
    out: &mut [f64],
) -> Result<(), AlgebraError> {
    let lambda = law_checked(lambda, law)?;
    assert_eq!(out.len(), lambda.len());
    let k = law.k();
    let alpha = law.alpha();
    let ek = with_prefix(lambda, k, None, |e| e[k]);
    let outer = if alpha == 1.0 {
        1.0
    } else {
        alpha * ek.powf(alpha - 1.0)
    };
    for i in 0..lambda.len() {
        let dek = with_prefix(lambda, k - 1, Some(i), |e| e[k - 1]);
        out[i] = outer * dek;
    }
    Ok(())
}

/// Speed evaluated from principal radii r_i = 1 / lambda_i without forming
/// the reciprocals: E_k(1/r) = E_{n-k}(r) / E_n(r).
pub fn speed_from_radii(radii: &[f64], law: &SpeedLaw) -> Result<f64, AlgebraError> {
    let radii = law_checked(radii, law)?;
    let n = law.n();
    let k = law.k();
    let ratio = with_prefix(radii, n, None, |e| e[n - k] / e[n]);
    Ok(powf_fast(ratio, law.alpha()))
}

/// The 1-homogeneous concave dual speed Phi(r) = norm_sym_k(1/r)^{-1/k},
/// normalized so that Phi = rho on a ball of radius rho; independent of
/// alpha.
pub fn phi(radii: &[f64], law: &SpeedLaw) -> Result<f64, AlgebraError> {
    let radii = law_checked(radii, law)?;
    let n = law.n();
    let k = law.k();
    let ratio = with_prefix(radii, n, None, |e| e[n - k] / e[n]) / binomial(n, k);
    Ok(ratio.powf(-1.0 / k as f64))
}

/// Relative residuals of the structural identities used throughout the
/// flow analysis. Each residual is normalized by the largest intermediate
/// magnitude so a fixed relative tolerance applies at any scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// | sum_i dE_k/dlambda_i lambda_i^2 - (H E_k - (k+1) E_{k+1}) | / scale.
    pub derivative_identity: f64,
    /// Violation of sum_i dE_k/dlambda_i lambda_i^2 >= (k/n) H E_k (0 if satisfied).
    pub derivative_lower_bound: f64,
    /// Violation of the Maclaurin step norm_sym^{1/(k+1)}_{k+1} <= norm_sym^{1/k}_k.
    pub maclaurin: f64,
    /// | <d sigma/d lambda, lambda> - alpha k sigma | / (alpha k sigma): Euler identity.
    pub euler: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.derivative_identity
            .max(self.derivative_lower_bound)
            .max(self.maclaurin)
            .max(self.euler)
    }
}

/// Evaluates the identity residuals at `lambda` for the law's (n, k, alpha).
pub fn identity_residuals(
    lambda: &[f64],
    law: &SpeedLaw,
) -> Result<IdentityResiduals, AlgebraError> {
    let lambda = law_checked(lambda, law)?;
    let n = law.n();
    let k = law.k();
    let alpha = law.alpha();

    let (ek, ekp1) = with_prefix(lambda, k + 1, None, |e| (e[k], e[k + 1]));
    let h: f64 = lambda.iter().sum();

    // sum_i dE_k/dlambda_i * lambda_i^2 via the remove-one recurrence.
    let mut quad_sum = 0.0;
    let mut grad_dot_lambda = 0.0;
    for (i, &li) in lambda.iter().enumerate() {
        let dek = with_prefix(lambda, k - 1, Some(i), |e| e[k - 1]);
        quad_sum += dek * li * li;
        grad_dot_lambda += dek * li;
    }

    let target = h * ek - (k + 1) as f64 * ekp1;
    let scale_a = quad_sum.abs().max(target.abs()).max(h * ek).max(1e-300);
    let derivative_identity = (quad_sum - target).abs() / scale_a;

    let lower = (k as f64 / n as f64) * h * ek;
    let derivative_lower_bound = ((lower - quad_sum) / scale_a).max(0.0);

    // Maclaurin step at this k, with norm_sym_{n+1} := 0 so k = n is trivial.
    let mk = ek / binomial(n, k);
    let mk_root = mk.powf(1.0 / k as f64);
    let maclaurin = if k == n {
        0.0
    } else {
        let mk1 = ekp1 / binomial(n, k + 1);
        let mk1_root = mk1.powf(1.0 / (k + 1) as f64);
        ((mk1_root - mk_root) / mk_root).max(0.0)
    };

    // Euler: <grad sigma, lambda> = alpha k sigma. grad sigma = outer * grad E_k.
    let sigma = powf_fast(ek, alpha);
    let outer = if alpha == 1.0 {
        1.0
    } else {
        alpha * ek.powf(alpha - 1.0)
    };
    let euler_lhs = outer * grad_dot_lambda;
    let euler_rhs = alpha * k as f64 * sigma;
    let euler = (euler_lhs - euler_rhs).abs() / euler_rhs;

    Ok(IdentityResiduals {
        derivative_identity,
        derivative_lower_bound,
        maclaurin,
        euler,
    })
}

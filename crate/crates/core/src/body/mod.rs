//! Convex bodies in support-function (Gauss-map) representation on the two
//! discretized backends, with the geometric functionals built from the
//! principal radii: area, enclosed volume, curvature integrals, mixed
//! volumes, isoperimetric ratios, Minkowski / Alexandrov-Fenchel / Ros
//! residuals, and ball-comparison measures.
//!
//! The embedding is X(z) = u(z) z + grad u(z) on S^n; the principal radii of
//! curvature are the eigenvalues of hess u + u g. On the circle this is the
//! single field r = u'' + u; on an axisymmetric surface of revolution the
//! two radii are r_1 = u'' + u (meridian) and r_2 = u' cot(phi) + u
//! (azimuth), with the pole limit r_2 -> u'' + u.

mod extremal;
pub(crate) mod grid;
mod serial;
mod shapes;

use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{self, AlgebraError, SpeedLaw};
use grid::{grid_for, Grid, MIN_NODES};

pub use shapes::{make_body, ShapeSpec};

/// Relative floor for the convexity margin: the minimum principal radius
/// must exceed this fraction of the mean absolute radius.
pub const CONVEXITY_FLOOR_REL: f64 = 1e-8;

/// Discretized backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Backend {
    /// Closed convex curve in the plane, parametrized over S^1 (n = 1).
    Circle,
    /// Convex surface of revolution in R^3, parametrized by the polar
    /// angle of the meridian (n = 2).
    Axisymmetric,
}

impl Backend {
    /// Hypersurface dimension n (the ambient space is R^{n+1}).
    pub fn ambient_n(self) -> usize {
        match self {
            Backend::Circle => 1,
            Backend::Axisymmetric => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Circle => "CIRCLE",
            Backend::Axisymmetric => "AXISYMMETRIC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BodyError {
    #[error("grid of {len} nodes is below the minimum of {min}")]
    GridTooSmall { len: usize, min: usize },
    #[error("support value u[{index}] = {value} must be positive and finite")]
    InvalidSupport { index: usize, value: f64 },
    #[error("convexity lost: principal radius {value:.6e} at node {index} is below the positivity floor")]
    ConvexityLoss { index: usize, value: f64 },
    #[error("shape construction failed: {0}")]
    Construction(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Unit-ball volume kappa_{n+1} of R^{n+1} for the supported dimensions.
pub fn ball_volume_constant(n: usize) -> f64 {
    match n {
        1 => std::f64::consts::PI,
        2 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("ball_volume_constant: only n = 1, 2 are discretized"),
    }
}

/// Principal radii of curvature at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiiField {
    backend: Backend,
    /// Meridian radius u'' + u (the only radius on the circle).
    pub r1: Vec<f64>,
    /// Azimuthal radius u' cot(phi) + u (empty on the circle).
    pub r2: Vec<f64>,
    /// Minimum radius over all nodes and directions.
    pub margin: f64,
}

impl RadiiField {
    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn len(&self) -> usize {
        self.r1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r1.is_empty()
    }

    /// Radii tuple at node j as a slice of length n.
    #[inline]
    pub fn node<'a>(&self, j: usize, buf: &'a mut [f64; 2]) -> &'a [f64] {
        match self.backend {
            Backend::Circle => {
                buf[0] = self.r1[j];
                &buf[..1]
            }
            Backend::Axisymmetric => {
                buf[0] = self.r1[j];
                buf[1] = self.r2[j];
                &buf[..2]
            }
        }
    }

    /// E_i(r) at node j for 0 <= i <= n (hard-coded small cases).
    #[inline]
    pub fn node_elem(&self, j: usize, i: usize) -> f64 {
        match (self.backend, i) {
            (_, 0) => 1.0,
            (Backend::Circle, 1) => self.r1[j],
            (Backend::Axisymmetric, 1) => self.r1[j] + self.r2[j],
            (Backend::Axisymmetric, 2) => self.r1[j] * self.r2[j],
            _ => panic!("node_elem: order {i} out of range"),
        }
    }

    /// Largest radius over all nodes and directions.
    pub fn max(&self) -> f64 {
        let m1 = self.r1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let m2 = self.r2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m1.max(m2)
    }
}

/// Computes principal radii of `u` on `grid` into `r1`/`r2`, returning
/// (min radius, mean |radius|). `r2` must be empty for the circle backend.
/// `d1`/`d2` are scratch buffers of the grid length.
pub(crate) fn radii_into(
    g: &Grid,
    u: &[f64],
    r1: &mut [f64],
    r2: &mut [f64],
    d1: &mut [f64],
    d2: &mut [f64],
) -> (f64, f64) {
    let n = g.len;
    g.second_derivative(u, d2);
    let mut min_r = f64::INFINITY;
    let mut sum_abs = 0.0;
    match g.backend {
        Backend::Circle => {
            for j in 0..n {
                let r = d2[j] + u[j];
                r1[j] = r;
                min_r = min_r.min(r);
                sum_abs += r.abs();
            }
            (min_r, sum_abs / n as f64)
        }
        Backend::Axisymmetric => {
            g.first_derivative(u, d1);
            for j in 0..n {
                let meridian = d2[j] + u[j];
                r1[j] = meridian;
                // The cell-centered grid keeps every node strictly inside
                // (0, pi), so cot(phi_j) is finite even at the pole cells
                // (~2/dphi), and the mirrored ghosts make u' vanish like
                // phi there: the product is well conditioned with a 4th
                // order error uniformly in j.
                let azimuthal = d1[j] * g.cot[j] + u[j];
                r2[j] = azimuthal;
                min_r = min_r.min(meridian.min(azimuthal));
                sum_abs += meridian.abs() + azimuthal.abs();
            }
            (min_r, sum_abs / (2 * n) as f64)
        }
    }
}

pub(crate) fn convexity_check(
    min_r: f64,
    mean_abs: f64,
    r1: &[f64],
    r2: &[f64],
) -> Result<(), BodyError> {
    if min_r.is_finite() && min_r > CONVEXITY_FLOOR_REL * mean_abs {
        return Ok(());
    }
    // Locate the worst node for the error report.
    let mut index = 0;
    let mut value = f64::INFINITY;
    for (j, &r) in r1.iter().enumerate() {
        if r < value || !r.is_finite() {
            value = r;
            index = j;
        }
    }
    for (j, &r) in r2.iter().enumerate() {
        if r < value || !r.is_finite() {
            value = r;
            index = j;
        }
    }
    Err(BodyError::ConvexityLoss { index, value })
}

/// A convex body stored as support values on the backend grid, together
/// with the cumulative origin shift applied by recentering.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportField {
    backend: Backend,
    u: Vec<f64>,
    origin_offset: [f64; 3],
}

/// Aggregate of the scalar descriptors of a body.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySummary {
    pub backend: Backend,
    pub nodes: usize,
    pub area: f64,
    pub volume: f64,
    /// V_0 .. V_{n+1}.
    pub mixed_volumes: Vec<f64>,
    /// Curvature integrals for k = 0 .. n.
    pub curvature_integrals: Vec<f64>,
    pub r_minus: f64,
    pub r_plus: f64,
    pub hausdorff_ball: f64,
    pub ball_radius: f64,
}

/// Inradius/circumradius data with the optimizing centers.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiiBounds {
    pub r_minus: f64,
    pub r_plus: f64,
    pub inner_center: [f64; 3],
    pub outer_center: [f64; 3],
}

/// Best-fit ball in Hausdorff distance.
#[derive(Debug, Clone, PartialEq)]
pub struct BallFit {
    pub distance: f64,
    pub radius: f64,
    pub center: [f64; 3],
}

impl SupportField {
    /// Builds a body from raw support values, validating positivity and
    /// convexity on the given backend grid.
    pub fn from_values(backend: Backend, u: Vec<f64>) -> Result<Self, BodyError> {
        if u.len() < MIN_NODES {
            return Err(BodyError::GridTooSmall {
                len: u.len(),
                min: MIN_NODES,
            });
        }
        for (index, &value) in u.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(BodyError::InvalidSupport { index, value });
            }
        }
        let body = SupportField {
            backend,
            u,
            origin_offset: [0.0; 3],
        };
        body.radii()?;
        Ok(body)
    }

    /// Internal constructor for values already validated by the caller.
    pub(crate) fn from_validated(backend: Backend, u: Vec<f64>, origin_offset: [f64; 3]) -> Self {
        SupportField {
            backend,
            u,
            origin_offset,
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Hypersurface dimension n.
    pub fn ambient_n(&self) -> usize {
        self.backend.ambient_n()
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    /// Cumulative translation applied by recentering: the current origin
    /// expressed in the coordinates the body was created in.
    pub fn origin_offset(&self) -> [f64; 3] {
        self.origin_offset
    }

    /// Grid parameters (theta or phi) of the nodes.
    pub fn node_params(&self) -> Vec<f64> {
        self.grid().params.clone()
    }

    /// Outward unit directions of the nodes.
    pub fn node_dirs(&self) -> Vec<[f64; 3]> {
        self.grid().dirs.clone()
    }

    /// Reconstructs the boundary from the support function: the point with
    /// outward normal z is X = u z + (tangential gradient of u), shifted by
    /// the stored origin offset. On the circle this is the closed curve
    /// (x, y); on the polar grid the meridian (rho, height) with rho >= 0.
    pub fn boundary_points(&self) -> Vec<[f64; 2]> {
        let g = self.grid();
        let mut d1 = vec![0.0; self.u.len()];
        g.first_derivative(&self.u, &mut d1);
        let off = self.origin_offset;
        g.params
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                let (s, c) = p.sin_cos();
                match self.backend {
                    Backend::Circle => [
                        off[0] + self.u[j] * c - d1[j] * s,
                        off[1] + self.u[j] * s + d1[j] * c,
                    ],
                    Backend::Axisymmetric => [
                        self.u[j] * s + d1[j] * c,
                        off[2] + self.u[j] * c - d1[j] * s,
                    ],
                }
            })
            .collect()
    }

    pub(crate) fn grid(&self) -> Arc<Grid> {
        grid_for(self.backend, self.u.len())
    }

    /// Principal radii of curvature; fails with a convexity-loss error when
    /// the radii leave the positive cone.
    pub fn radii(&self) -> Result<RadiiField, BodyError> {
        let g = self.grid();
        let n = g.len;
        let mut r1 = vec![0.0; n];
        let mut r2 = match self.backend {
            Backend::Circle => Vec::new(),
            Backend::Axisymmetric => vec![0.0; n],
        };
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        let (min_r, mean_abs) = radii_into(&g, &self.u, &mut r1, &mut r2, &mut d1, &mut d2);
        convexity_check(min_r, mean_abs, &r1, &r2)?;
        Ok(RadiiField {
            backend: self.backend,
            r1,
            r2,
            margin: min_r,
        })
    }

    /// Surface area A = integral of E_n(r) dz.
    pub fn area(&self) -> Result<f64, BodyError> {
        let r = self.radii()?;
        Ok(self.area_given(&r))
    }

    pub(crate) fn area_given(&self, r: &RadiiField) -> f64 {
        let g = self.grid();
        let n = self.ambient_n();
        g.integrate(|j| r.node_elem(j, n))
    }

    /// Enclosed volume Vol = integral of u E_n(r) dz / (n + 1).
    pub fn volume(&self) -> Result<f64, BodyError> {
        let r = self.radii()?;
        Ok(self.volume_given(&r))
    }

    pub(crate) fn volume_given(&self, r: &RadiiField) -> f64 {
        let g = self.grid();
        let n = self.ambient_n();
        g.integrate(|j| self.u[j] * r.node_elem(j, n)) / (n as f64 + 1.0)
    }

    /// Curvature integral of E_k(lambda) d mu = integral of E_{n-k}(r) dz
    /// for 0 <= k <= n.
    pub fn curvature_integral(&self, k: usize) -> Result<f64, BodyError> {
        let r = self.radii()?;
        self.curvature_integral_given(&r, k)
    }

    pub(crate) fn curvature_integral_given(
        &self,
        r: &RadiiField,
        k: usize,
    ) -> Result<f64, BodyError> {
        let n = self.ambient_n();
        if k > n {
            return Err(AlgebraError::OrderOutOfRange { k, n }.into());
        }
        let g = self.grid();
        Ok(g.integrate(|j| r.node_elem(j, n - k)))
    }

    /// Mixed volumes V_0 .. V_{n+1} of the body with the unit ball:
    /// V_{n+1} is the volume, V_i = integral of E_i(r) dz / ((n+1) C(n,i))
    /// for i <= n, and the Steiner polynomial reads
    /// Vol(body + t B) = sum_i C(n+1, i) V_{n+1-i} t^i.
    pub fn mixed_volumes(&self) -> Result<Vec<f64>, BodyError> {
        let r = self.radii()?;
        Ok(self.mixed_volumes_given(&r))
    }

    pub(crate) fn mixed_volumes_given(&self, r: &RadiiField) -> Vec<f64> {
        let g = self.grid();
        let n = self.ambient_n();
        let mut v = Vec::with_capacity(n + 2);
        for i in 0..=n {
            let integral = g.integrate(|j| r.node_elem(j, i));
            v.push(integral / ((n as f64 + 1.0) * algebra::binomial(n, i)));
        }
        v.push(self.volume_given(r));
        v
    }

    /// Isoperimetric ratio I_{n-k+1} = V_{n-k+1}^{n+1} / Vol^{n-k+1} for
    /// 1 <= k <= n; scale invariant, minimized by balls.
    pub fn iso_ratio(&self, k: usize) -> Result<f64, BodyError> {
        let n = self.ambient_n();
        if k == 0 || k > n {
            return Err(AlgebraError::OrderOutOfRange { k, n }.into());
        }
        let v = self.mixed_volumes()?;
        Ok(iso_ratio_from_mixed(&v, n, k))
    }

    /// Minkowski identity residual
    /// integral of norm_sym_l d mu - integral of u norm_sym_{l+1} d mu
    /// for 0 <= l <= n - 1 (zero in the continuum).
    pub fn minkowski_residual(&self, l: usize) -> Result<f64, BodyError> {
        let r = self.radii()?;
        self.minkowski_residual_given(&r, l)
    }

    pub(crate) fn minkowski_residual_given(
        &self,
        r: &RadiiField,
        l: usize,
    ) -> Result<f64, BodyError> {
        let n = self.ambient_n();
        if l + 1 > n {
            return Err(AlgebraError::OrderOutOfRange { k: l, n }.into());
        }
        let g = self.grid();
        let c_l = algebra::binomial(n, l);
        let c_l1 = algebra::binomial(n, l + 1);
        Ok(g.integrate(|j| {
            r.node_elem(j, n - l) / c_l - self.u[j] * r.node_elem(j, n - l - 1) / c_l1
        }))
    }

    /// Ros deficit integral of 1/norm_sym_1 d mu - (n+1) Vol (nonnegative,
    /// zero exactly on balls). Requires n >= 2.
    pub fn ros_deficit(&self) -> Result<f64, BodyError> {
        let r = self.radii()?;
        self.ros_deficit_given(&r)
    }

    pub(crate) fn ros_deficit_given(&self, r: &RadiiField) -> Result<f64, BodyError> {
        let n = self.ambient_n();
        if n < 2 {
            return Err(BodyError::Unsupported(
                "ros_deficit requires a hypersurface dimension n >= 2".into(),
            ));
        }
        let g = self.grid();
        // 1/norm_sym_1(lambda) * E_n(r) = n E_n(r)^2 / E_{n-1}(r).
        let integral = g.integrate(|j| {
            let en = r.node_elem(j, n);
            n as f64 * en * en / r.node_elem(j, n - 1)
        });
        Ok(integral - (n as f64 + 1.0) * self.volume_given(r))
    }

    /// Alexandrov-Fenchel deficit kappa_{n+1}^{m-l} - V_l^m / V_m^l for
    /// 1 <= m < l <= n + 1 (nonnegative, zero exactly on balls).
    pub fn af_deficit(&self, m: usize, l: usize) -> Result<f64, BodyError> {
        let n = self.ambient_n();
        if !(1 <= m && m < l && l <= n + 1) {
            return Err(BodyError::Unsupported(format!(
                "af_deficit requires 1 <= m < l <= n + 1, got m = {m}, l = {l}"
            )));
        }
        let v = self.mixed_volumes()?;
        let kappa = ball_volume_constant(n);
        Ok(kappa.powi(m as i32 - l as i32) - v[l].powi(m as i32) / v[m].powi(l as i32))
    }

    /// Inradius and circumradius over all candidate centers, with the
    /// optimizing centers.
    pub fn radii_bounds(&self) -> Result<RadiiBounds, BodyError> {
        let g = self.grid();
        let (r_minus, inner_center) = extremal::inner_ball(&g, &self.u);
        let (r_plus, outer_center) = extremal::outer_ball(&g, &self.u);
        if !r_minus.is_finite() || !r_plus.is_finite() {
            return Err(BodyError::Unsupported(
                "radii bounds optimization produced a non-finite value".into(),
            ));
        }
        Ok(RadiiBounds {
            r_minus,
            r_plus,
            inner_center,
            outer_center,
        })
    }

    /// Hausdorff distance to the best-fitting ball, with its radius and
    /// center. For support functions the Hausdorff distance to the ball
    /// B(q, R) is sup_z |u(z) - <q, z> - R|.
    pub fn hausdorff_to_ball(&self) -> Result<BallFit, BodyError> {
        let g = self.grid();
        let fit = extremal::best_ball(&g, &self.u);
        if !fit.distance.is_finite() {
            return Err(BodyError::Unsupported(
                "ball fit optimization produced a non-finite value".into(),
            ));
        }
        Ok(fit)
    }

    /// Translates the origin to the circumcenter, returning the shifted
    /// body and the shift applied.
    pub fn recentered(&self) -> Result<(SupportField, [f64; 3]), BodyError> {
        let bounds = self.radii_bounds()?;
        let q = bounds.outer_center;
        let body = self.translated([-q[0], -q[1], -q[2]])?;
        Ok((body, q))
    }

    /// Support function of the body translated by v: u + <v, z>.
    pub fn translated(&self, v: [f64; 3]) -> Result<SupportField, BodyError> {
        let g = self.grid();
        let u = (0..self.u.len())
            .map(|j| self.u[j] + dot(v, g.dirs[j]))
            .collect();
        let mut body = SupportField::from_values(self.backend, u)?;
        body.origin_offset = [
            self.origin_offset[0] - v[0],
            self.origin_offset[1] - v[1],
            self.origin_offset[2] - v[2],
        ];
        Ok(body)
    }

    /// The body scaled by c > 0 about the origin.
    pub fn scaled(&self, c: f64) -> Result<SupportField, BodyError> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(BodyError::Construction(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        let u = self.u.iter().map(|&x| c * x).collect();
        let mut body = SupportField::from_values(self.backend, u)?;
        body.origin_offset = [
            c * self.origin_offset[0],
            c * self.origin_offset[1],
            c * self.origin_offset[2],
        ];
        Ok(body)
    }

    /// The outer parallel body at distance t >= 0: support u + t.
    pub fn outer_parallel(&self, t: f64) -> Result<SupportField, BodyError> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(BodyError::Construction(format!(
                "parallel distance must be nonnegative, got {t}"
            )));
        }
        let u = self.u.iter().map(|&x| x + t).collect();
        let mut body = SupportField::from_values(self.backend, u)?;
        body.origin_offset = self.origin_offset;
        Ok(body)
    }

    /// Scalar summary of the body.
    pub fn summary(&self) -> Result<BodySummary, BodyError> {
        let r = self.radii()?;
        let n = self.ambient_n();
        let mut curvature_integrals = Vec::with_capacity(n + 1);
        for k in 0..=n {
            curvature_integrals.push(self.curvature_integral_given(&r, k)?);
        }
        let bounds = self.radii_bounds()?;
        let fit = self.hausdorff_to_ball()?;
        Ok(BodySummary {
            backend: self.backend,
            nodes: self.u.len(),
            area: self.area_given(&r),
            volume: self.volume_given(&r),
            mixed_volumes: self.mixed_volumes_given(&r),
            curvature_integrals,
            r_minus: bounds.r_minus,
            r_plus: bounds.r_plus,
            hausdorff_ball: fit.distance,
            ball_radius: fit.radius,
        })
    }

    /// Serializes to the plain-text body format (bit-exact round trip).
    pub fn to_text(&self) -> String {
        serial::to_text(self)
    }

    /// Parses the plain-text body format.
    pub fn from_text(text: &str) -> Result<SupportField, BodyError> {
        serial::from_text(text)
    }

    /// Mean speed h = integral of sigma d mu / area for the given law:
    /// the unique additive normalization making the flow volume-preserving.
    pub fn mean_speed(&self, law: &SpeedLaw) -> Result<f64, BodyError> {
        let n = self.ambient_n();
        if law.n() != n {
            return Err(AlgebraError::DimensionMismatch {
                expected: n,
                actual: law.n(),
            }
            .into());
        }
        let r = self.radii()?;
        let g = self.grid();
        let mut buf = [0.0f64; 2];
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.u.len() {
            let rj = r.node(j, &mut buf);
            let sigma = algebra::speed_from_radii(rj, law)?;
            let en = r.node_elem(j, n);
            num += g.weights[j] * sigma * en;
            den += g.weights[j] * en;
        }
        Ok(num / den)
    }
}

pub(crate) fn iso_ratio_from_mixed(v: &[f64], n: usize, k: usize) -> f64 {
    let idx = n - k + 1;
    v[idx].powi(n as i32 + 1) / v[n + 1].powi(idx as i32)
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

//! Center optimizations behind the radii bounds and the ball fit.
//!
//! For a center candidate q the recentered support is u(z) - <q, z>; its
//! maximum over nodes is the circumradius about q (convex in q), its minimum
//! the inradius about q (concave in q), and their half-difference the
//! Hausdorff distance to the best ball centered at q (convex in q). Each is
//! optimized by golden-section search: a 1D search along the symmetry axis
//! for the axisymmetric backend, a nested 2D search in the plane for the
//! circle backend. Unimodality follows from convexity/concavity in q.

use super::grid::Grid;
use super::{dot, BallFit, Backend};

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9;
const MAX_ITER: usize = 220;

/// Minimizes a unimodal function on [a, b] to absolute x-tolerance `tol`.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN_INV * (b - a);
    let mut x2 = a + GOLDEN_INV * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..MAX_ITER {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN_INV * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN_INV * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimum and maximum of u(z_j) - <q, z_j> over the nodes.
fn support_extremes(u: &[f64], dirs: &[[f64; 3]], q: [f64; 3]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (j, &d) in dirs.iter().enumerate() {
        let v = u[j] - dot(q, d);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Minimizes `objective(q)` over admissible centers. The circle backend
/// searches the plane by nesting golden sections; the axisymmetric backend
/// searches the symmetry axis (by symmetry the optimum lies on it).
fn minimize_over_centers(
    g: &Grid,
    u: &[f64],
    objective: impl Fn(f64, f64) -> f64 + Copy,
) -> ([f64; 3], f64) {
    let range = u.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * (1.0 + range);
    let eval = |q: [f64; 3]| {
        let (lo, hi) = support_extremes(u, &g.dirs, q);
        objective(lo, hi)
    };
    match g.backend {
        Backend::Axisymmetric => {
            let (qz, v) = golden_min(|z| eval([0.0, 0.0, z]), -range, range, tol);
            ([0.0, 0.0, qz], v)
        }
        Backend::Circle => {
            let inner = |qx: f64| golden_min(|qy| eval([qx, qy, 0.0]), -range, range, tol);
            let (qx, _) = golden_min(|qx| inner(qx).1, -range, range, tol);
            let (qy, v) = inner(qx);
            ([qx, qy, 0.0], v)
        }
    }
}

/// Largest inscribed ball: (inradius, center).
pub(crate) fn inner_ball(g: &Grid, u: &[f64]) -> (f64, [f64; 3]) {
    let (q, neg) = minimize_over_centers(g, u, |lo, _hi| -lo);
    (-neg, q)
}

/// Smallest circumscribed ball: (circumradius, center).
pub(crate) fn outer_ball(g: &Grid, u: &[f64]) -> (f64, [f64; 3]) {
    let (q, v) = minimize_over_centers(g, u, |_lo, hi| hi);
    (v, q)
}

/// Ball minimizing the Hausdorff distance: for a fixed center the optimal
/// radius is the midpoint of the support extremes, giving distance
/// (max - min) / 2.
pub(crate) fn best_ball(g: &Grid, u: &[f64]) -> BallFit {
    let (q, dist) = minimize_over_centers(g, u, |lo, hi| 0.5 * (hi - lo));
    let (lo, hi) = support_extremes(u, &g.dirs, q);
    BallFit {
        distance: dist,
        radius: 0.5 * (lo + hi),
        center: q,
    }
}

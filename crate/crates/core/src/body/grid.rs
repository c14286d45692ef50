//! Discretization grids for the two backends, with cached differentiation
//! operators and quadrature weights.
//!
//! CIRCLE: N equispaced angles theta_j = 2 pi j / N on S^1. Derivatives are
//! exact derivatives of the trigonometric interpolant (FFT diagonalization),
//! quadrature is the periodic trapezoid rule; both converge spectrally.
//!
//! AXISYMMETRIC: N cell-centered polar angles phi_j = (j + 1/2) pi / N on
//! the meridian of S^2, so no node sits on a pole. Derivatives use 4th-order
//! centered finite differences with even-mirror ghost values across the
//! poles (an axisymmetric profile smooth on the sphere is a smooth function
//! of cos phi, hence even across both poles). Quadrature uses Fejer's first
//! rule in x = cos phi: the substitution x = cos phi maps the cell-centered
//! phi grid exactly onto the Chebyshev nodes of the first kind, so the rule
//! integrates constants exactly and converges spectrally for smooth
//! integrands.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Backend;

pub(crate) const MIN_NODES: usize = 16;

struct CircleFft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

pub(crate) struct Grid {
    pub backend: Backend,
    pub len: usize,
    /// theta_j (CIRCLE) or phi_j (AXISYMMETRIC).
    pub params: Vec<f64>,
    /// Quadrature weights for the reference measure dz on S^n
    /// (sum = 2 pi resp. 4 pi, exactly up to rounding).
    pub weights: Vec<f64>,
    /// Unit outward directions z_j in R^3; the CIRCLE backend lives in the
    /// x-y plane, the AXISYMMETRIC meridian in the x-z plane.
    pub dirs: Vec<[f64; 3]>,
    /// cot(phi_j) (AXISYMMETRIC only, else empty).
    pub cot: Vec<f64>,
    /// Grid spacing: 2 pi / N resp. pi / N.
    pub dparam: f64,
    fft: Option<CircleFft>,
}

impl Grid {
    fn circle(len: usize) -> Grid {
        let dparam = 2.0 * PI / len as f64;
        let params: Vec<f64> = (0..len).map(|j| j as f64 * dparam).collect();
        let weights = vec![dparam; len];
        let dirs = params
            .iter()
            .map(|&t| [t.cos(), t.sin(), 0.0])
            .collect();
        let mut planner = FftPlanner::new();
        let fft = CircleFft {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        };
        Grid {
            backend: Backend::Circle,
            len,
            params,
            weights,
            dirs,
            cot: Vec::new(),
            dparam,
            fft: Some(fft),
        }
    }

    fn axisymmetric(len: usize) -> Grid {
        let dparam = PI / len as f64;
        let params: Vec<f64> = (0..len).map(|j| (j as f64 + 0.5) * dparam).collect();
        // Fejer-1 weights on x_j = cos phi_j, scaled by 2 pi for the
        // azimuthal integral: integral over S^2 of f equals
        // 2 pi * int_{-1}^{1} f(arccos x) dx for axisymmetric f.
        let mut weights = Vec::with_capacity(len);
        for j in 0..len {
            let theta = params[j];
            let mut s = 0.0;
            for m in 1..=(len / 2) {
                s += (2.0 * m as f64 * theta).cos() / ((4 * m * m - 1) as f64);
            }
            weights.push(2.0 * PI * (2.0 / len as f64) * (1.0 - 2.0 * s));
        }
        let dirs = params.iter().map(|&p| [p.sin(), 0.0, p.cos()]).collect();
        let cot = params.iter().map(|&p| p.cos() / p.sin()).collect();
        Grid {
            backend: Backend::Axisymmetric,
            len,
            params,
            weights,
            dirs,
            cot,
            dparam,
            fft: None,
        }
    }

    /// Signed Fourier mode for bin m of an N-point transform.
    #[inline]
    fn mode(m: usize, len: usize) -> f64 {
        if m <= len / 2 {
            m as f64
        } else {
            m as f64 - len as f64
        }
    }

    fn spectrum(&self, u: &[f64]) -> Vec<Complex<f64>> {
        let fft = self.fft.as_ref().expect("spectral ops are CIRCLE-only");
        let mut buf: Vec<Complex<f64>> =
            u.iter().map(|&x| Complex::new(x, 0.0)).collect();
        fft.forward.process(&mut buf);
        buf
    }

    fn inverse_re(&self, mut hat: Vec<Complex<f64>>, out: &mut [f64]) {
        let fft = self.fft.as_ref().unwrap();
        fft.inverse.process(&mut hat);
        let scale = 1.0 / self.len as f64;
        for (o, c) in out.iter_mut().zip(hat.iter()) {
            *o = c.re * scale;
        }
    }

    /// Second derivative with respect to the grid parameter.
    pub fn second_derivative(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.len);
        match self.backend {
            Backend::Circle => {
                let mut hat = self.spectrum(u);
                for (m, c) in hat.iter_mut().enumerate() {
                    let f = Self::mode(m, self.len);
                    *c *= -f * f;
                }
                self.inverse_re(hat, out);
            }
            Backend::Axisymmetric => {
                let n = self.len;
                let inv = 1.0 / (12.0 * self.dparam * self.dparam);
                for j in 0..n {
                    let um2 = u[Self::mirror(j as isize - 2, n)];
                    let um1 = u[Self::mirror(j as isize - 1, n)];
                    let up1 = u[Self::mirror(j as isize + 1, n)];
                    let up2 = u[Self::mirror(j as isize + 2, n)];
                    out[j] =
                        (-um2 + 16.0 * um1 - 30.0 * u[j] + 16.0 * up1 - up2) * inv;
                }
            }
        }
    }

    /// First derivative with respect to the grid parameter.
    pub fn first_derivative(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.len);
        match self.backend {
            Backend::Circle => {
                let mut hat = self.spectrum(u);
                for (m, c) in hat.iter_mut().enumerate() {
                    // The Nyquist mode has no well-defined first derivative
                    // direction; its true coefficient is real, so drop it.
                    let f = if 2 * m == self.len {
                        0.0
                    } else {
                        Self::mode(m, self.len)
                    };
                    *c *= Complex::new(0.0, f);
                }
                self.inverse_re(hat, out);
            }
            Backend::Axisymmetric => {
                let n = self.len;
                let inv = 1.0 / (12.0 * self.dparam);
                for j in 0..n {
                    let um2 = u[Self::mirror(j as isize - 2, n)];
                    let um1 = u[Self::mirror(j as isize - 1, n)];
                    let up1 = u[Self::mirror(j as isize + 1, n)];
                    let up2 = u[Self::mirror(j as isize + 2, n)];
                    out[j] = (um2 - 8.0 * um1 + 8.0 * up1 - up2) * inv;
                }
            }
        }
    }

    /// Even-mirror ghost index across the poles: the profile extends to
    /// phi < 0 and phi > pi by reflection.
    #[inline]
    fn mirror(i: isize, n: usize) -> usize {
        if i < 0 {
            (-1 - i) as usize
        } else if i as usize >= n {
            2 * n - 1 - i as usize
        } else {
            i as usize
        }
    }

    /// Fixed-order weighted sum (deterministic across runs).
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for j in 0..self.len {
            s += self.weights[j] * f(j);
        }
        s
    }
}

/// Global cache: grids are pure functions of (backend, N) and expensive to
/// plan (FFT), so they are built once per process.
pub(crate) fn grid_for(backend: Backend, len: usize) -> Arc<Grid> {
    static CACHE: OnceLock<Mutex<HashMap<(Backend, usize), Arc<Grid>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((backend, len))
        .or_insert_with(|| {
            Arc::new(match backend {
                Backend::Circle => Grid::circle(len),
                Backend::Axisymmetric => Grid::axisymmetric(len),
            })
        })
        .clone()
}

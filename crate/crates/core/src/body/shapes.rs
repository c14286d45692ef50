//! Reference shapes: spheres, ellipses, spheroids, and seeded random
//! trigonometric perturbations of the unit sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::grid_for;
use super::{Backend, BodyError, SupportField};

/// Constructible body shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    /// Ball of the given radius centered at the origin (either backend).
    Sphere { radius: f64 },
    /// Axis-aligned ellipse with semi-axes a (x) and b (y); CIRCLE only.
    Ellipse { a: f64, b: f64 },
    /// Spheroid with equatorial semi-axis a and polar semi-axis c;
    /// AXISYMMETRIC only.
    EllipsoidRev { a: f64, c: f64 },
    /// Unit sphere plus a seeded random trigonometric perturbation, with
    /// the amplitude rescaled until the minimum principal radius clears
    /// `margin`. Identical seeds produce identical bodies.
    RandomTrig { seed: u64, modes: usize, margin: f64 },
}

/// Builds a body on the given backend and resolution.
pub fn make_body(
    spec: &ShapeSpec,
    backend: Backend,
    resolution: usize,
) -> Result<SupportField, BodyError> {
    match *spec {
        ShapeSpec::Sphere { radius } => {
            require_positive("radius", radius)?;
            SupportField::from_values(backend, vec![radius; resolution])
        }
        ShapeSpec::Ellipse { a, b } => {
            require_positive("a", a)?;
            require_positive("b", b)?;
            if backend != Backend::Circle {
                return Err(BodyError::Construction(
                    "ellipse requires the CIRCLE backend".into(),
                ));
            }
            let g = grid_for(backend, resolution.max(super::grid::MIN_NODES));
            let u = g
                .params
                .iter()
                .take(resolution)
                .map(|&t| (a * a * t.cos().powi(2) + b * b * t.sin().powi(2)).sqrt())
                .collect();
            SupportField::from_values(backend, u)
        }
        ShapeSpec::EllipsoidRev { a, c } => {
            require_positive("a", a)?;
            require_positive("c", c)?;
            if backend != Backend::Axisymmetric {
                return Err(BodyError::Construction(
                    "ellipsoid_rev requires the AXISYMMETRIC backend".into(),
                ));
            }
            let g = grid_for(backend, resolution.max(super::grid::MIN_NODES));
            let u = g
                .params
                .iter()
                .take(resolution)
                .map(|&p| (c * c * p.cos().powi(2) + a * a * p.sin().powi(2)).sqrt())
                .collect();
            SupportField::from_values(backend, u)
        }
        ShapeSpec::RandomTrig {
            seed,
            modes,
            margin,
        } => {
            if modes == 0 {
                return Err(BodyError::Construction("modes >= 1 required".into()));
            }
            require_positive("margin", margin)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Mode amplitudes fall off like 1/m^2 so the perturbation stays
            // smooth; the cosine/sine pair order fixes the draw sequence.
            let coeffs: Vec<(f64, f64)> = (1..=modes)
                .map(|m| {
                    let a: f64 = rng.gen_range(-1.0..1.0);
                    let b: f64 = rng.gen_range(-1.0..1.0);
                    let fall = (m * m) as f64;
                    (a / fall, b / fall)
                })
                .collect();
            let g = grid_for(backend, resolution.max(super::grid::MIN_NODES));
            let perturbation: Vec<f64> = g
                .params
                .iter()
                .take(resolution)
                .map(|&p| {
                    let mut s = 0.0;
                    for (m, &(ca, cb)) in coeffs.iter().enumerate() {
                        let mp = (m + 1) as f64 * p;
                        s += match backend {
                            Backend::Circle => ca * mp.cos() + cb * mp.sin(),
                            // cos(m phi) = T_m(cos phi) keeps the profile
                            // smooth across both poles.
                            Backend::Axisymmetric => ca * mp.cos(),
                        };
                    }
                    s
                })
                .collect();
            let mut scale = 1.0;
            for _ in 0..64 {
                let u: Vec<f64> = perturbation.iter().map(|&p| 1.0 + scale * p).collect();
                if let Ok(body) = SupportField::from_values(backend, u) {
                    if body.radii().map(|r| r.margin >= margin).unwrap_or(false) {
                        return Ok(body);
                    }
                }
                scale *= 0.5;
            }
            Err(BodyError::Construction(format!(
                "random body with seed {seed} cannot reach convexity margin {margin}"
            )))
        }
    }
}

fn require_positive(name: &str, value: f64) -> Result<(), BodyError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(BodyError::Construction(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_restrictions_are_enforced() {
        assert!(matches!(
            make_body(&ShapeSpec::Ellipse { a: 2.0, b: 1.0 }, Backend::Axisymmetric, 64),
            Err(BodyError::Construction(_))
        ));
        assert!(matches!(
            make_body(&ShapeSpec::EllipsoidRev { a: 1.0, c: 1.6 }, Backend::Circle, 64),
            Err(BodyError::Construction(_))
        ));
        assert!(matches!(
            make_body(&ShapeSpec::Sphere { radius: -1.0 }, Backend::Circle, 64),
            Err(BodyError::Construction(_))
        ));
    }

    #[test]
    fn random_bodies_are_deterministic_and_convex() {
        let spec = ShapeSpec::RandomTrig {
            seed: 7,
            modes: 5,
            margin: 0.1,
        };
        let a = make_body(&spec, Backend::Circle, 128).unwrap();
        let b = make_body(&spec, Backend::Circle, 128).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.radii().unwrap().margin >= 0.1);
        let c = make_body(&spec, Backend::Axisymmetric, 128).unwrap();
        assert!(c.radii().unwrap().margin >= 0.1);
        // Different seeds give different bodies.
        let d = make_body(
            &ShapeSpec::RandomTrig {
                seed: 8,
                modes: 5,
                margin: 0.1,
            },
            Backend::Circle,
            128,
        )
        .unwrap();
        assert_ne!(a.values(), d.values());
    }

    #[test]
    fn unreachable_margin_is_reported() {
        let spec = ShapeSpec::RandomTrig {
            seed: 7,
            modes: 3,
            margin: 2.0,
        };
        assert!(matches!(
            make_body(&spec, Backend::Circle, 64),
            Err(BodyError::Construction(_))
        ));
    }
}

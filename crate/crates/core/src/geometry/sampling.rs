//! Random points and tangent vectors, used by the property suites.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Manifold, ManifoldKind, Point, TangentVector, Vector};

fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// A random point. Embedded kinds project a standard Gaussian; the
/// hyperboloid lifts a Gaussian from the spatial coordinates, and the Fisher
/// half-plane draws `σ` log-normally.
pub fn random_point<R: Rng + ?Sized>(m: Manifold, rng: &mut R) -> Point {
    let n = m.ambient_dim();
    let coords = match m.kind() {
        ManifoldKind::Hyperboloid { .. } => {
            let mut z = gaussian(rng, n);
            z[0] = 0.0;
            z[0] = (1.0 + z.norm_squared()).sqrt();
            z
        }
        ManifoldKind::FisherHalfPlane => {
            let z = gaussian(rng, 2);
            Vector::from_vec(vec![z[0], (0.5 * z[1]).exp()])
        }
        _ => loop {
            // A Gaussian matrix is full rank almost surely; retry otherwise.
            if let Ok(p) = m.project_point(&gaussian(rng, n)) {
                break p;
            }
        },
    };
    Point::new_unchecked(m, coords)
}

/// Projected standard Gaussian tangent vector.
pub fn random_tangent<R: Rng + ?Sized>(x: &Point, rng: &mut R) -> TangentVector {
    let m = x.manifold();
    let z = gaussian(rng, m.ambient_dim());
    let coords = m.project_tangent_at(x.coords(), &z);
    TangentVector::new(x.clone(), coords).expect("projection is tangent")
}

/// Random tangent vector of unit Riemannian norm.
pub fn random_unit_tangent<R: Rng + ?Sized>(x: &Point, rng: &mut R) -> TangentVector {
    loop {
        let v = random_tangent(x, rng);
        let n = v.norm();
        if n > 1e-8 {
            return v.scale(1.0 / n);
        }
    }
}

//! Manifold primitives.
//!
//! [`Manifold`] is a small copyable descriptor. The raw coordinate operations
//! (`exp_at`, `retract_at`, ...) take and return plain [`Vector`]s and do not
//! validate their inputs; [`Point`] and [`TangentVector`] are the checked
//! front end.

mod field;
mod fisher;
mod manifold;
mod ops;
mod point;
mod retraction;
pub mod sampling;
mod stiefel;

pub use field::{
    DirectionalFn, FnField, GradientField, JacobianMode, ProjectedAffineField, ScalarFn, VectorField,
    VectorFn,
};
pub use manifold::{Manifold, ManifoldKind, MetricFamily};
pub use point::{Point, TangentVector, ON_MANIFOLD_TOL, TANGENCY_TOL};
pub use retraction::RetractionScheme;
pub use stiefel::MIN_SINGULAR_VALUE;

/// Ambient or chart coordinates.
pub type Vector = nalgebra::DVector<f64>;

use crate::error::{Error, Result};

/// The extension `ĝ = g ∘ proj` of a function on the manifold to the
/// projection tube. Only defined for embedded kinds.
pub fn ambient_extend<G>(manifold: Manifold, g: G) -> Result<impl Fn(&Vector) -> Result<f64>>
where
    G: Fn(&Vector) -> f64,
{
    if !manifold.is_embedded() {
        return Err(Error::unsupported(format!(
            "{manifold} has no ambient embedding to extend into"
        )));
    }
    Ok(move |z: &Vector| manifold.project_point(z).map(|p| g(&p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_is_g_after_projection() {
        let m = Manifold::sphere(1).unwrap();
        let ext = ambient_extend(m, |x: &Vector| x[0]).unwrap();
        assert_eq!(ext(&Vector::from_vec(vec![2.0, 0.0])).unwrap(), 1.0);
        let on = Vector::from_vec(vec![0.6, 0.8]);
        assert!((ext(&on).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn extension_is_flat_in_normal_direction() {
        let m = Manifold::sphere(1).unwrap();
        let ext = ambient_extend(m, |x: &Vector| x[0] + x[1] * x[1]).unwrap();
        let h = 1e-5;
        let up = ext(&Vector::from_vec(vec![1.0 + h, 0.0])).unwrap();
        let dn = ext(&Vector::from_vec(vec![1.0 - h, 0.0])).unwrap();
        assert!(((up - dn) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn extension_needs_embedding() {
        assert!(matches!(
            ambient_extend(Manifold::fisher_half_plane(), |x: &Vector| x[0]),
            Err(Error::Unsupported(_))
        ));
    }
}

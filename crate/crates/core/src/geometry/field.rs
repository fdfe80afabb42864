use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Manifold, Vector};

pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// `(x, v) ↦ D²φ(x) v`, or any other map linear in `v`.
pub type DirectionalFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// A tangent vector field given in ambient (or chart) coordinates.
///
/// `ambient_derivative` returns the directional derivative `DW(x)[v]` of some
/// smooth ambient extension of the field, when it is known in closed form.
/// Covariant derivatives fall back to finite differences otherwise.
pub trait VectorField: Send + Sync {
    fn value(&self, x: &Vector) -> Vector;

    fn ambient_derivative(&self, _x: &Vector, _v: &Vector) -> Option<Vector> {
        None
    }
}

impl<F: VectorField + ?Sized> VectorField for Arc<F> {
    fn value(&self, x: &Vector) -> Vector {
        (**self).value(x)
    }
    fn ambient_derivative(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        (**self).ambient_derivative(x, v)
    }
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn value(&self, x: &Vector) -> Vector {
        (**self).value(x)
    }
    fn ambient_derivative(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        (**self).ambient_derivative(x, v)
    }
}

/// How covariant derivatives obtain the field Jacobian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Analytic when the field provides it, finite differences otherwise.
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
}

/// Field built from a closure, with an optional closed-form derivative.
pub struct FnField<V, D = fn(&Vector, &Vector) -> Vector> {
    value: V,
    derivative: Option<D>,
}

impl<V> FnField<V>
where
    V: Fn(&Vector) -> Vector + Send + Sync,
{
    pub fn new(value: V) -> Self {
        FnField {
            value,
            derivative: None,
        }
    }
}

impl<V, D> FnField<V, D>
where
    V: Fn(&Vector) -> Vector + Send + Sync,
    D: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    pub fn with_derivative(value: V, derivative: D) -> Self {
        FnField {
            value,
            derivative: Some(derivative),
        }
    }
}

impl<V, D> VectorField for FnField<V, D>
where
    V: Fn(&Vector) -> Vector + Send + Sync,
    D: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    fn value(&self, x: &Vector) -> Vector {
        (self.value)(x)
    }
    fn ambient_derivative(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        self.derivative.as_ref().map(|d| d(x, v))
    }
}

/// The gradient of the affine-quadratic ambient function with Euclidean
/// gradient `A z + b`, i.e. `x ↦ grad(x; A x + b)`. Every kind gets a closed
/// form Jacobian through [`Manifold::gradient_from_ambient_derivative`].
pub struct ProjectedAffineField {
    manifold: Manifold,
    a: DMatrix<f64>,
    b: Vector,
}

impl ProjectedAffineField {
    pub fn new(manifold: Manifold, a: DMatrix<f64>, b: Vector) -> Self {
        assert_eq!(a.nrows(), manifold.ambient_dim());
        assert_eq!(a.ncols(), manifold.ambient_dim());
        assert_eq!(b.len(), manifold.ambient_dim());
        ProjectedAffineField { manifold, a, b }
    }
}

impl VectorField for ProjectedAffineField {
    fn value(&self, x: &Vector) -> Vector {
        let df = &self.a * x + &self.b;
        self.manifold.gradient_from_ambient(x, &df)
    }

    fn ambient_derivative(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        let df = &self.a * x + &self.b;
        let d2f_v = &self.a * v;
        Some(self.manifold.gradient_from_ambient_derivative(x, v, &df, &d2f_v))
    }
}

/// Riemannian gradient of an ambient function given its Euclidean gradient
/// and, optionally, its Hessian-vector product.
#[derive(Clone)]
pub struct GradientField {
    manifold: Manifold,
    gradient: VectorFn,
    hvp: Option<DirectionalFn>,
}

impl GradientField {
    pub fn new(manifold: Manifold, gradient: VectorFn, hvp: Option<DirectionalFn>) -> Self {
        GradientField {
            manifold,
            gradient,
            hvp,
        }
    }
}

impl VectorField for GradientField {
    fn value(&self, x: &Vector) -> Vector {
        self.manifold.gradient_from_ambient(x, &(self.gradient)(x))
    }

    fn ambient_derivative(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        let hvp = self.hvp.as_ref()?;
        let df = (self.gradient)(x);
        Some(self.manifold.gradient_from_ambient_derivative(x, v, &df, &hvp(x, v)))
    }
}

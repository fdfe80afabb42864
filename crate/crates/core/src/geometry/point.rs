use std::fmt;

use super::field::{JacobianMode, VectorField};
use super::{Manifold, ManifoldKind, RetractionScheme, Vector};
use crate::error::{Error, Result};

/// Largest constraint residual accepted for a [`Point`].
pub const ON_MANIFOLD_TOL: f64 = 1e-10;
/// Largest `‖v − P_x v‖` accepted for a [`TangentVector`].
pub const TANGENCY_TOL: f64 = 1e-10;

/// A point of a manifold in ambient (chart, for the Fisher half-plane)
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    manifold: Manifold,
    coords: Vector,
}

/// A tangent vector together with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: Point,
    coords: Vector,
}

impl Point {
    /// Checked constructor; the coordinates must satisfy the constraint to
    /// within [`ON_MANIFOLD_TOL`].
    pub fn new(manifold: Manifold, coords: Vector) -> Result<Self> {
        manifold.check_len(&coords, "point")?;
        let r = manifold.residual(&coords);
        if !(r <= ON_MANIFOLD_TOL) {
            return Err(Error::invalid(format!(
                "point is off {manifold}: residual {r:.3e}"
            )));
        }
        Ok(Point { manifold, coords })
    }

    pub fn from_slice(manifold: Manifold, coords: &[f64]) -> Result<Self> {
        Self::new(manifold, Vector::from_column_slice(coords))
    }

    /// Metric projection of an ambient vector.
    pub fn project(manifold: Manifold, z: &Vector) -> Result<Self> {
        let coords = manifold.project_point(z)?;
        Ok(Point { manifold, coords })
    }

    /// Skips validation; callers guarantee the constraint.
    pub(crate) fn new_unchecked(manifold: Manifold, coords: Vector) -> Self {
        Point { manifold, coords }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn into_coords(self) -> Vector {
        self.coords
    }

    pub fn residual(&self) -> f64 {
        self.manifold.residual(&self.coords)
    }

    fn owns(&self, v: &TangentVector) -> Result<()> {
        let same = v.base.manifold == self.manifold
            && v.base
                .coords
                .iter()
                .zip(self.coords.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        if same {
            Ok(())
        } else {
            Err(Error::invalid("tangent vector is based at a different point"))
        }
    }

    /// The zero tangent vector at this point.
    pub fn zero(&self) -> TangentVector {
        TangentVector {
            base: self.clone(),
            coords: Vector::zeros(self.coords.len()),
        }
    }

    /// Wraps coordinates the caller knows to be tangent.
    pub(crate) fn tangent_unchecked(&self, coords: Vector) -> TangentVector {
        TangentVector {
            base: self.clone(),
            coords,
        }
    }

    /// Checked tangent vector constructor.
    pub fn tangent(&self, coords: Vector) -> Result<TangentVector> {
        TangentVector::new(self.clone(), coords)
    }

    pub fn inner(&self, v: &TangentVector, w: &TangentVector) -> Result<f64> {
        self.owns(v)?;
        self.owns(w)?;
        Ok(self.manifold.inner_at(&self.coords, &v.coords, &w.coords))
    }

    pub fn norm(&self, v: &TangentVector) -> Result<f64> {
        self.inner(v, v).map(|s| s.max(0.0).sqrt())
    }

    pub fn project_tangent(&self, z: &Vector) -> Result<TangentVector> {
        self.manifold.check_len(z, "ambient vector")?;
        Ok(TangentVector {
            base: self.clone(),
            coords: self.manifold.project_tangent_at(&self.coords, z),
        })
    }

    pub fn exp(&self, v: &TangentVector) -> Result<Point> {
        self.owns(v)?;
        Ok(Point::new_unchecked(
            self.manifold,
            self.manifold.exp_at(&self.coords, &v.coords),
        ))
    }

    pub fn retract(&self, v: &TangentVector, scheme: RetractionScheme) -> Result<Point> {
        self.owns(v)?;
        let y = self.manifold.retract_at(&self.coords, &v.coords, scheme)?;
        Ok(Point::new_unchecked(self.manifold, y))
    }

    /// Transports `w` along `t ↦ exp(t v)` to `exp(v)`.
    pub fn parallel_transport(&self, v: &TangentVector, w: &TangentVector) -> Result<TangentVector> {
        self.owns(v)?;
        self.owns(w)?;
        let coords = self.manifold.transport_at(&self.coords, &v.coords, &w.coords)?;
        Ok(TangentVector {
            base: self.exp(v)?,
            coords,
        })
    }

    pub fn distance(&self, other: &Point) -> Result<f64> {
        if other.manifold != self.manifold {
            return Err(Error::invalid("points live on different manifolds"));
        }
        Ok(self.manifold.distance_at(&self.coords, &other.coords))
    }

    /// Riemannian gradient from a Euclidean ambient (chart) gradient.
    pub fn gradient_from_ambient(&self, df: &Vector) -> Result<TangentVector> {
        self.manifold.check_len(df, "ambient gradient")?;
        Ok(TangentVector {
            base: self.clone(),
            coords: self.manifold.gradient_from_ambient(&self.coords, df),
        })
    }

    /// `∇_v W` at this point.
    pub fn covariant_derivative(
        &self,
        field: &dyn VectorField,
        v: &TangentVector,
        mode: JacobianMode,
    ) -> Result<TangentVector> {
        self.owns(v)?;
        let coords = self
            .manifold
            .covariant_derivative_at(field, &self.coords, &v.coords, mode)?;
        Ok(TangentVector {
            base: self.clone(),
            coords,
        })
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.manifold)?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

impl TangentVector {
    pub fn new(base: Point, coords: Vector) -> Result<Self> {
        base.manifold.check_len(&coords, "tangent vector")?;
        if !matches!(base.manifold.kind(), ManifoldKind::FisherHalfPlane) {
            let r = base.manifold.tangency_residual(&base.coords, &coords);
            if !(r <= TANGENCY_TOL) {
                return Err(Error::invalid(format!(
                    "vector is not tangent: residual {r:.3e}"
                )));
            }
        }
        Ok(TangentVector { base, coords })
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn into_coords(self) -> Vector {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        self.base
            .manifold
            .norm_at(&self.base.coords, &self.coords)
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            coords: &self.coords * s,
        }
    }

    pub fn add(&self, other: &TangentVector) -> Result<TangentVector> {
        self.base.owns(other)?;
        Ok(TangentVector {
            base: self.base.clone(),
            coords: &self.coords + &other.coords,
        })
    }
}

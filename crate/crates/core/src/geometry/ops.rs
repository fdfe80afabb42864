//! Coordinate-level geometry, dispatched on the manifold kind.
//!
//! Everything here works on raw ambient (or chart) coordinate vectors and is
//! what the hot loops call; [`super::Point`] wraps these with invariants.

use super::field::{JacobianMode, VectorField};
use super::retraction::{cutoff_norm, RetractionScheme};
use super::{fisher, stiefel, Manifold, ManifoldKind, Vector};
use crate::error::{Error, Result};

/// Norm below which a vector has no radial projection onto the sphere.
const SPHERE_MIN_NORM: f64 = 1e-12;

fn minkowski(a: &Vector, b: &Vector) -> f64 {
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `sin(t)/t`.
fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        1.0 - t * t / 6.0 + t.powi(4) / 120.0
    } else {
        t.sin() / t
    }
}

/// `sinh(t)/t`.
fn sinhc(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        1.0 + t * t / 6.0 + t.powi(4) / 120.0
    } else {
        t.sinh() / t
    }
}

// Round-sphere primitives, shared by Circle, Sphere and the product blocks.

fn sphere_project_tangent(x: &Vector, z: &Vector) -> Vector {
    z - x * x.dot(z)
}

fn sphere_projection_derivative(x: &Vector, v: &Vector, w: &Vector) -> Vector {
    -(x * v.dot(w) + v * x.dot(w))
}

fn sphere_project(z: &Vector) -> Result<Vector> {
    let n = z.norm();
    if !(n >= SPHERE_MIN_NORM) {
        return Err(Error::tube(format!("vector norm {n:.3e} has no nearest point on the sphere")));
    }
    Ok(z / n)
}

fn sphere_exp(x: &Vector, v: &Vector) -> Vector {
    let t = v.norm();
    x * t.cos() + v * sinc(t)
}

fn sphere_transport(x: &Vector, v: &Vector, w: &Vector) -> Vector {
    let t = v.norm();
    if t == 0.0 {
        return w.clone();
    }
    let u = v / t;
    let c = u.dot(w);
    w + (&u * (t.cos() - 1.0) - x * t.sin()) * c
}

fn sphere_distance(x: &Vector, y: &Vector) -> f64 {
    2.0 * (0.5 * (x - y).norm()).min(1.0).asin()
}

fn stereographic(x: &Vector, v: &Vector) -> Vector {
    let q = 0.25 * v.norm_squared();
    (x * (1.0 - q) + v) / (1.0 + q)
}

fn cutoff(v: &Vector, norm: f64, radius: f64) -> Vector {
    if norm <= 0.5 * radius {
        v.clone()
    } else {
        v * (cutoff_norm(norm, radius) / norm)
    }
}

/// Index ranges of the unit-sphere blocks of a product point.
fn sphere_blocks(d0: usize, d1: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..d1).map(move |j| j * d0..(j + 1) * d0)
}

fn block(x: &Vector, r: &std::ops::Range<usize>) -> Vector {
    x.rows(r.start, r.len()).into_owned()
}

fn set_block(x: &mut Vector, r: &std::ops::Range<usize>, b: &Vector) {
    x.rows_mut(r.start, r.len()).copy_from(b);
}

impl Manifold {
    pub(crate) fn check_len(&self, z: &Vector, what: &str) -> Result<()> {
        if z.len() != self.ambient_dim() {
            return Err(Error::invalid(format!(
                "{what} has length {}, {} expects {}",
                z.len(),
                self,
                self.ambient_dim()
            )));
        }
        Ok(())
    }

    /// Distance of `x` from the manifold constraint.
    pub fn residual(&self, x: &Vector) -> f64 {
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => (x.norm() - 1.0).abs(),
            ManifoldKind::Stiefel { n, r } => stiefel::residual(&stiefel::to_mat(x, n, r)),
            ManifoldKind::ProductSphereEuclid { d0, d1 } => sphere_blocks(d0, d1)
                .map(|b| (block(x, &b).norm() - 1.0).abs())
                .fold(0.0, f64::max),
            ManifoldKind::Hyperboloid { .. } => {
                if x[0] > 0.0 {
                    (minkowski(x, x) + 1.0).abs()
                } else {
                    f64::INFINITY
                }
            }
            ManifoldKind::FisherHalfPlane => {
                if x[1] > 0.0 && x.iter().all(|c| c.is_finite()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Riemannian inner product `⟨v, w⟩_x`.
    pub fn inner_at(&self, x: &Vector, v: &Vector, w: &Vector) -> f64 {
        match self.kind() {
            ManifoldKind::Hyperboloid { .. } => minkowski(v, w),
            ManifoldKind::FisherHalfPlane => {
                let (g11, g22) = fisher::metric_diag(x);
                g11 * v[0] * w[0] + g22 * v[1] * w[1]
            }
            _ => v.dot(w),
        }
    }

    pub fn norm_at(&self, x: &Vector, v: &Vector) -> f64 {
        self.inner_at(x, v, v).max(0.0).sqrt()
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn project_tangent_at(&self, x: &Vector, z: &Vector) -> Vector {
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => sphere_project_tangent(x, z),
            ManifoldKind::Stiefel { n, r } => stiefel::to_vec(&stiefel::project_tangent(
                &stiefel::to_mat(x, n, r),
                &stiefel::to_mat(z, n, r),
            )),
            ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                let mut out = z.clone();
                for b in sphere_blocks(d0, d1) {
                    set_block(&mut out, &b, &sphere_project_tangent(&block(x, &b), &block(z, &b)));
                }
                out
            }
            ManifoldKind::Hyperboloid { .. } => z + x * minkowski(x, z),
            ManifoldKind::FisherHalfPlane => z.clone(),
        }
    }

    /// `d/dt P_{x + t v}(w)` at `t = 0` for the ambient extension of the
    /// tangent projection.
    pub fn tangent_projection_derivative(&self, x: &Vector, v: &Vector, w: &Vector) -> Vector {
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => {
                sphere_projection_derivative(x, v, w)
            }
            ManifoldKind::Stiefel { n, r } => stiefel::to_vec(&stiefel::project_tangent_derivative(
                &stiefel::to_mat(x, n, r),
                &stiefel::to_mat(v, n, r),
                &stiefel::to_mat(w, n, r),
            )),
            ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                let mut out = Vector::zeros(x.len());
                for b in sphere_blocks(d0, d1) {
                    let d = sphere_projection_derivative(&block(x, &b), &block(v, &b), &block(w, &b));
                    set_block(&mut out, &b, &d);
                }
                out
            }
            ManifoldKind::Hyperboloid { .. } => x * minkowski(v, w) + v * minkowski(x, w),
            ManifoldKind::FisherHalfPlane => Vector::zeros(x.len()),
        }
    }

    /// `‖z − P_x z‖`, zero for tangent vectors.
    pub fn tangency_residual(&self, x: &Vector, z: &Vector) -> f64 {
        (z - self.project_tangent_at(x, z)).norm()
    }

    /// Metric projection onto the manifold.
    pub fn project_point(&self, z: &Vector) -> Result<Vector> {
        self.check_len(z, "ambient vector")?;
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => sphere_project(z),
            ManifoldKind::Stiefel { n, r } => {
                Ok(stiefel::to_vec(&stiefel::polar(&stiefel::to_mat(z, n, r))?))
            }
            ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                let mut out = z.clone();
                for b in sphere_blocks(d0, d1) {
                    set_block(&mut out, &b, &sphere_project(&block(z, &b))?);
                }
                Ok(out)
            }
            ManifoldKind::Hyperboloid { .. } => {
                let q = -minkowski(z, z);
                if !(q > 1e-12) || z[0] <= 0.0 {
                    return Err(Error::tube(
                        "vector is not future-timelike, no projection onto the hyperboloid",
                    ));
                }
                Ok(z / q.sqrt())
            }
            ManifoldKind::FisherHalfPlane => {
                if z[1] > 0.0 && z.iter().all(|c| c.is_finite()) {
                    Ok(z.clone())
                } else {
                    Err(Error::tube(format!("σ = {} is not positive", z[1])))
                }
            }
        }
    }

    /// Riemannian exponential map.
    pub fn exp_at(&self, x: &Vector, v: &Vector) -> Vector {
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => sphere_exp(x, v),
            ManifoldKind::Stiefel { n, r } => {
                if v.iter().all(|c| *c == 0.0) {
                    return x.clone();
                }
                let (y, _, _) =
                    stiefel::geodesic(&stiefel::to_mat(x, n, r), &stiefel::to_mat(v, n, r), None);
                // Strip the O(1e-14) RK4 drift off the constraint.
                stiefel::polar(&y).map(|p| stiefel::to_vec(&p)).unwrap_or_else(|_| stiefel::to_vec(&y))
            }
            ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                let mut out = x + v;
                for b in sphere_blocks(d0, d1) {
                    set_block(&mut out, &b, &sphere_exp(&block(x, &b), &block(v, &b)));
                }
                out
            }
            ManifoldKind::Hyperboloid { .. } => {
                let t = minkowski(v, v).max(0.0).sqrt();
                x * t.cosh() + v * sinhc(t)
            }
            ManifoldKind::FisherHalfPlane => fisher::exp(x, v),
        }
    }

    /// Retraction `retr_x(v)` under the given scheme.
    pub fn retract_at(&self, x: &Vector, v: &Vector, scheme: RetractionScheme) -> Result<Vector> {
        match scheme {
            RetractionScheme::Exponential => Ok(self.exp_at(x, v)),
            RetractionScheme::Stereographic => {
                if !self.is_round_sphere() {
                    return Err(Error::unsupported(format!(
                        "stereographic retraction is only defined on spheres, not {self}"
                    )));
                }
                Ok(stereographic(x, v))
            }
            RetractionScheme::MetricProjection => {
                let radius = self.tube_radius();
                let step = match self.kind() {
                    ManifoldKind::FisherHalfPlane => v.clone(),
                    ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                        let mut c = v.clone();
                        for b in sphere_blocks(d0, d1) {
                            let vb = block(v, &b);
                            set_block(&mut c, &b, &cutoff(&vb, vb.norm(), radius));
                        }
                        c
                    }
                    _ => cutoff(v, self.norm_at(x, v), radius),
                };
                self.project_point(&(x + step))
            }
        }
    }

    /// Parallel transport of `w` along `t ↦ exp_x(t v)`, `t ∈ [0, 1]`.
    pub fn transport_at(&self, x: &Vector, v: &Vector, w: &Vector) -> Result<Vector> {
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => Ok(sphere_transport(x, v, w)),
            ManifoldKind::Stiefel { n, r } => {
                if v.iter().all(|c| *c == 0.0) {
                    return Ok(w.clone());
                }
                let (y, _, wt) = stiefel::geodesic(
                    &stiefel::to_mat(x, n, r),
                    &stiefel::to_mat(v, n, r),
                    Some(&stiefel::to_mat(w, n, r)),
                );
                let wt = wt.expect("transport requested");
                let y = stiefel::polar(&y).unwrap_or(y);
                Ok(stiefel::to_vec(&stiefel::project_tangent(&y, &wt)))
            }
            ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                let mut out = w.clone();
                for b in sphere_blocks(d0, d1) {
                    let t = sphere_transport(&block(x, &b), &block(v, &b), &block(w, &b));
                    set_block(&mut out, &b, &t);
                }
                Ok(out)
            }
            ManifoldKind::Hyperboloid { .. } => {
                let t = minkowski(v, v).max(0.0).sqrt();
                if t == 0.0 {
                    return Ok(w.clone());
                }
                let u = v / t;
                let c = minkowski(&u, w);
                Ok(w + (&u * (t.cosh() - 1.0) + x * t.sinh()) * c)
            }
            ManifoldKind::FisherHalfPlane => Ok(fisher::transport(x, v, w)),
        }
    }

    /// Geodesic distance. Stiefel has no closed form; the Frobenius chord is
    /// returned, which agrees with the geodesic distance to relative
    /// O(d²) and is what the retraction-order diagnostics need.
    pub fn distance_at(&self, x: &Vector, y: &Vector) -> f64 {
        match self.kind() {
            ManifoldKind::Circle | ManifoldKind::Sphere { .. } => sphere_distance(x, y),
            ManifoldKind::Stiefel { .. } => (x - y).norm(),
            ManifoldKind::ProductSphereEuclid { d0, d1 } => {
                let tail = d0 * d1;
                let mut s: f64 = sphere_blocks(d0, d1)
                    .map(|b| sphere_distance(&block(x, &b), &block(y, &b)).powi(2))
                    .sum();
                s += (x.rows(tail, x.len() - tail) - y.rows(tail, y.len() - tail)).norm_squared();
                s.sqrt()
            }
            ManifoldKind::Hyperboloid { .. } => {
                let d = x - y;
                2.0 * (0.5 * minkowski(&d, &d).max(0.0).sqrt()).asinh()
            }
            ManifoldKind::FisherHalfPlane => fisher::distance(x, y),
        }
    }

    /// Riemannian gradient from the Euclidean (ambient or chart) gradient.
    pub fn gradient_from_ambient(&self, x: &Vector, df: &Vector) -> Vector {
        match self.kind() {
            ManifoldKind::Hyperboloid { .. } => {
                let mut jdf = df.clone();
                jdf[0] = -jdf[0];
                self.project_tangent_at(x, &jdf)
            }
            ManifoldKind::FisherHalfPlane => fisher::raise(x, df),
            _ => self.project_tangent_at(x, df),
        }
    }

    /// Directional derivative along `v` of the ambient extension
    /// `z ↦ gradient_from_ambient(z, Df(z))`, given `Df(x)` and `D²f(x) v`.
    pub fn gradient_from_ambient_derivative(
        &self,
        x: &Vector,
        v: &Vector,
        df: &Vector,
        d2f_v: &Vector,
    ) -> Vector {
        match self.kind() {
            ManifoldKind::Hyperboloid { .. } => {
                let mut jdf = df.clone();
                jdf[0] = -jdf[0];
                let mut jd2 = d2f_v.clone();
                jd2[0] = -jd2[0];
                self.tangent_projection_derivative(x, v, &jdf) + self.project_tangent_at(x, &jd2)
            }
            ManifoldKind::FisherHalfPlane => fisher::raise_derivative(x, v, df, d2f_v),
            _ => self.tangent_projection_derivative(x, v, df) + self.project_tangent_at(x, d2f_v),
        }
    }

    /// Default central-difference step, `cbrt(ε)·(1 + ‖x‖)`.
    pub fn default_fd_step(&self, x: &Vector) -> f64 {
        f64::EPSILON.cbrt() * (1.0 + x.norm())
    }

    /// Curve through `x` with initial velocity `v` used for finite
    /// differences of fields: metric projection of the chord, or the chart
    /// line on the Fisher half-plane.
    pub(crate) fn fd_curve(&self, x: &Vector, v: &Vector, t: f64) -> Result<Vector> {
        self.project_or_chart(x + v * t)
    }

    /// Metric projection for embedded kinds, identity in the chart.
    pub(crate) fn project_or_chart(&self, z: Vector) -> Result<Vector> {
        match self.kind() {
            ManifoldKind::FisherHalfPlane => Ok(z),
            _ => self.project_point(&z),
        }
    }

    /// `d/dt W(c(t))` at 0 by central differences along [`Self::fd_curve`].
    pub fn field_derivative_fd(
        &self,
        field: &dyn VectorField,
        x: &Vector,
        v: &Vector,
        h: f64,
    ) -> Result<Vector> {
        let vn = v.norm();
        if vn == 0.0 {
            return Ok(Vector::zeros(x.len()));
        }
        let t = h / vn;
        let wp = field.value(&self.fd_curve(x, v, t)?);
        let wm = field.value(&self.fd_curve(x, v, -t)?);
        Ok((wp - wm) / (2.0 * t))
    }

    /// Levi-Civita connection from an ambient field derivative `dw = DW(x)[v]`.
    pub fn connection(&self, x: &Vector, v: &Vector, w: &Vector, dw: &Vector) -> Vector {
        match self.kind() {
            ManifoldKind::FisherHalfPlane => dw + fisher::christoffel(x, v, w),
            _ => self.project_tangent_at(x, dw),
        }
    }

    /// Covariant derivative `∇_v W` at `x`.
    pub fn covariant_derivative_at(
        &self,
        field: &dyn VectorField,
        x: &Vector,
        v: &Vector,
        mode: JacobianMode,
    ) -> Result<Vector> {
        let dw = match mode {
            JacobianMode::Analytic => field
                .ambient_derivative(x, v)
                .ok_or_else(|| Error::unsupported("field has no analytic Jacobian"))?,
            JacobianMode::Auto => match field.ambient_derivative(x, v) {
                Some(d) => d,
                None => self.field_derivative_fd(field, x, v, self.default_fd_step(x))?,
            },
            JacobianMode::FiniteDifference => {
                self.field_derivative_fd(field, x, v, self.default_fd_step(x))?
            }
        };
        let w = match self.kind() {
            // Only the chart connection needs W(x) itself.
            ManifoldKind::FisherHalfPlane => field.value(x),
            _ => Vector::zeros(0),
        };
        Ok(self.connection(x, v, &w, &dw))
    }
}

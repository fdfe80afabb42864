//! Finite sample spaces, stochastic objectives and the noise fields derived
//! from them.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::TestFunction;
use crate::error::{Error, Result};
use crate::geometry::{DirectionalFn, GradientField, Manifold, Point, TangentVector, Vector, VectorField, VectorFn};

/// Tolerance on `Σ ϑᵢ = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finite probability space `(Ξ, ϑ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct FiniteSampleSpace {
    labels: Vec<String>,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl TryFrom<SpaceRepr> for FiniteSampleSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        FiniteSampleSpace::with_labels(r.labels, r.weights)
    }
}

impl From<FiniteSampleSpace> for SpaceRepr {
    fn from(s: FiniteSampleSpace) -> Self {
        SpaceRepr {
            labels: s.labels,
            weights: s.weights,
        }
    }
}

impl FiniteSampleSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| format!("xi{i}")).collect();
        Self::with_labels(labels, weights)
    }

    pub fn with_labels(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("sample space needs at least one atom"));
        }
        if labels.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("atom weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *cdf.last_mut().expect("non-empty") = 1.0;
        Ok(FiniteSampleSpace { labels, weights, cdf })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("sample space needs at least one atom"));
        }
        let mut w = vec![1.0 / m as f64; m];
        // Absorb rounding so the weights sum to one exactly enough.
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Inverse-CDF lookup of `u ∈ [0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        self.cdf.partition_point(|c| *c <= u).min(self.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.len() == 1 {
            // Keep the stream position independent of m for deterministic
            // problems.
            let _: f64 = rng.random();
            return 0;
        }
        self.index_for(rng.random::<f64>())
    }
}

/// Objective `f` on a manifold together with an unbiased random gradient
/// field `f̃(·, ξ)` over a finite sample space.
#[derive(Clone)]
pub struct StochasticObjective {
    manifold: Manifold,
    name: String,
    f: TestFunction,
    gradient: VectorFn,
    space: FiniteSampleSpace,
    atoms: Vec<Arc<dyn VectorField>>,
}

impl std::fmt::Debug for StochasticObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StochasticObjective")
            .field("name", &self.name)
            .field("manifold", &self.manifold)
            .field("atoms", &self.space.len())
            .finish()
    }
}

/// One summand `φ` of `f = Σ ϑᵢ φᵢ`, given by its value, Euclidean gradient
/// and optional Hessian-vector product.
#[derive(Clone)]
pub struct Component {
    pub value: Arc<dyn Fn(&Vector) -> f64 + Send + Sync>,
    pub gradient: VectorFn,
    pub hvp: Option<DirectionalFn>,
}

impl StochasticObjective {
    /// `f` must carry an analytic ambient gradient; `atoms[i]` is the field
    /// `f̃(·, ξᵢ)`.
    pub fn new(
        manifold: Manifold,
        name: impl Into<String>,
        f: TestFunction,
        space: FiniteSampleSpace,
        atoms: Vec<Arc<dyn VectorField>>,
    ) -> Result<Self> {
        let gradient = f
            .gradient_fn()
            .ok_or_else(|| Error::invalid("objective needs an analytic ambient gradient"))?;
        if atoms.len() != space.len() {
            return Err(Error::invalid(format!(
                "{} atom fields for {} atoms",
                atoms.len(),
                space.len()
            )));
        }
        Ok(StochasticObjective {
            manifold,
            name: name.into(),
            f,
            gradient,
            space,
            atoms,
        })
    }

    /// Finite-sum objective `f = Σ ϑᵢ φᵢ` with `f̃(·, ξᵢ) = grad φᵢ`, which is
    /// unbiased by construction.
    pub fn from_components(
        manifold: Manifold,
        name: impl Into<String>,
        space: FiniteSampleSpace,
        components: Vec<Component>,
    ) -> Result<Self> {
        if components.len() != space.len() {
            return Err(Error::invalid(format!(
                "{} components for {} atoms",
                components.len(),
                space.len()
            )));
        }
        let w: Arc<[f64]> = space.weights().into();
        let comps: Arc<[Component]> = components.into();
        let all_hvp = comps.iter().all(|c| c.hvp.is_some());
        let (w1, c1) = (w.clone(), comps.clone());
        let (w2, c2) = (w.clone(), comps.clone());
        let mut f = TestFunction::new("f", move |x: &Vector| {
            w1.iter().zip(c1.iter()).map(|(w, c)| w * (c.value)(x)).sum()
        })
        .with_gradient(move |x: &Vector| {
            let mut out = Vector::zeros(x.len());
            for (w, c) in w2.iter().zip(c2.iter()) {
                out.axpy(*w, &(c.gradient)(x), 1.0);
            }
            out
        });
        if all_hvp {
            let (w3, c3) = (w.clone(), comps.clone());
            f = f.with_hvp(move |x: &Vector, v: &Vector| {
                let mut out = Vector::zeros(x.len());
                for (w, c) in w3.iter().zip(c3.iter()) {
                    out.axpy(*w, &(c.hvp.as_ref().expect("checked"))(x, v), 1.0);
                }
                out
            });
        }
        let atoms = comps
            .iter()
            .map(|c| {
                Arc::new(GradientField::new(manifold, c.gradient.clone(), c.hvp.clone()))
                    as Arc<dyn VectorField>
            })
            .collect();
        Self::new(manifold, name, f, space, atoms)
    }

    /// Noise-free objective: one atom with `f̃ = grad f`.
    pub fn deterministic(manifold: Manifold, name: impl Into<String>, f: TestFunction) -> Result<Self> {
        let grad = f
            .gradient_field(manifold)
            .ok_or_else(|| Error::invalid("objective needs an analytic ambient gradient"))?;
        Self::new(
            manifold,
            name,
            f,
            FiniteSampleSpace::uniform(1)?,
            vec![Arc::new(grad)],
        )
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &FiniteSampleSpace {
        &self.space
    }

    pub fn atom_count(&self) -> usize {
        self.space.len()
    }

    pub fn objective(&self) -> &TestFunction {
        &self.f
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.f.eval(x)
    }

    pub fn ambient_gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }

    /// `grad f(x)`.
    pub fn grad_at(&self, x: &Vector) -> Vector {
        self.manifold.gradient_from_ambient(x, &(self.gradient)(x))
    }

    /// `grad f` as a vector field, with a closed-form Jacobian when `f` has a
    /// Hessian-vector product.
    pub fn grad_field(&self) -> GradientField {
        GradientField::new(self.manifold, self.gradient.clone(), self.f.hvp_fn())
    }

    pub fn atom(&self, i: usize) -> &Arc<dyn VectorField> {
        &self.atoms[i]
    }

    /// `f̃(x, ξᵢ)`.
    pub fn atom_at(&self, x: &Vector, i: usize) -> Vector {
        self.atoms[i].value(x)
    }

    /// `Ḡ(·, ξᵢ) = grad f − f̃(·, ξᵢ)` as a vector field.
    pub fn noise(&self, i: usize) -> Result<NoiseField> {
        self.check_index(i)?;
        Ok(NoiseField {
            grad: self.grad_field(),
            atom: self.atoms[i].clone(),
        })
    }

    /// `Ḡ(x, ξᵢ)` in coordinates.
    pub fn noise_at(&self, x: &Vector, i: usize) -> Vector {
        self.grad_at(x) - self.atom_at(x, i)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.space.len() {
            return Err(Error::invalid(format!(
                "atom index {i} out of range for {} atoms",
                self.space.len()
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.manifold() != self.manifold {
            return Err(Error::invalid(format!(
                "point on {} passed to an objective on {}",
                x.manifold(),
                self.manifold
            )));
        }
        Ok(())
    }

    pub fn riemannian_gradient(&self, x: &Point) -> Result<TangentVector> {
        self.check_point(x)?;
        x.gradient_from_ambient(&self.ambient_gradient(x.coords()))
    }

    pub fn noise_field(&self, x: &Point, i: usize) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_index(i)?;
        Ok(x.tangent_unchecked(self.noise_at(x.coords(), i)))
    }

    /// `σᵢ(x) = √(η ϑᵢ) Ḡ(x, ξᵢ)`, the coefficients of the independent scalar
    /// Brownian motions.
    pub fn diffusion_vectors_at(&self, x: &Vector, eta: f64) -> Vec<Vector> {
        let g = self.grad_at(x);
        self.space
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| (&g - self.atom_at(x, i)) * (eta * w).sqrt())
            .collect()
    }

    pub fn diffusion_vectors(&self, x: &Point, eta: f64) -> Result<Vec<TangentVector>> {
        self.check_point(x)?;
        if eta < 0.0 {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        Ok(self
            .diffusion_vectors_at(x.coords(), eta)
            .into_iter()
            .map(|s| x.tangent_unchecked(s))
            .collect())
    }

    /// `‖Σ ϑᵢ f̃(x, ξᵢ) − grad f(x)‖`.
    pub fn unbiasedness_residual(&self, x: &Vector) -> f64 {
        let mut mean = Vector::zeros(x.len());
        for (i, w) in self.space.weights().iter().enumerate() {
            mean.axpy(*w, &self.atom_at(x, i), 1.0);
        }
        (mean - self.grad_at(x)).norm()
    }

    /// `max_x Σ ϑᵢ ‖f̃(x, ξᵢ)‖³` over the given points.
    pub fn third_moment_diagnostic(&self, points: &[Point]) -> Result<f64> {
        if points.is_empty() {
            return Err(Error::invalid("third-moment diagnostic needs at least one point"));
        }
        let mut worst: f64 = 0.0;
        for p in points {
            self.check_point(p)?;
            let x = p.coords();
            let s: f64 = (0..self.space.len())
                .map(|i| self.space.weights()[i] * self.manifold.norm_at(x, &self.atom_at(x, i)).powi(3))
                .sum();
            worst = worst.max(s);
        }
        Ok(worst)
    }
}

/// `Ḡ = grad f − f̃(·, ξ)`.
#[derive(Clone)]
pub struct NoiseField {
    grad: GradientField,
    atom: Arc<dyn VectorField>,
}

impl VectorField for NoiseField {
    fn value(&self, x: &Vector) -> Vector {
        self.grad.value(x) - self.atom.value(x)
    }

    fn ambient_derivative(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        Some(self.grad.ambient_derivative(x, v)? - self.atom.ambient_derivative(x, v)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FnField;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    #[test]
    fn space_validation() {
        assert!(FiniteSampleSpace::new(vec![0.5, 0.5]).is_ok());
        assert!(FiniteSampleSpace::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteSampleSpace::new(vec![1.0, 0.0]).is_err());
        assert!(FiniteSampleSpace::new(vec![]).is_err());
        let u = FiniteSampleSpace::uniform(7).unwrap();
        assert!((u.weights().iter().sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOL);
    }

    #[test]
    fn inverse_cdf() {
        let s = FiniteSampleSpace::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(s.index_for(0.0), 0);
        assert_eq!(s.index_for(0.2499), 0);
        assert_eq!(s.index_for(0.25), 1);
        assert_eq!(s.index_for(0.74), 1);
        assert_eq!(s.index_for(0.9999999), 2);
    }

    #[test]
    fn space_json_round_trip_validates() {
        let s = FiniteSampleSpace::new(vec![0.25, 0.75]).unwrap();
        let back: FiniteSampleSpace = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<FiniteSampleSpace>(r#"{"labels":["a"],"weights":[0.3]}"#).is_err());
    }

    fn linear_circle_objective(atoms: Vec<Arc<dyn VectorField>>, space: FiniteSampleSpace) -> StochasticObjective {
        let f = TestFunction::new("f", |x: &Vector| -x[0]).with_gradient(|_| v(&[-1.0, 0.0]));
        StochasticObjective::new(Manifold::circle(), "t", f, space, atoms).unwrap()
    }

    #[test]
    fn degenerate_space_has_no_noise() {
        let f = TestFunction::new("f", |x: &Vector| -x[0])
            .with_gradient(|_| v(&[-1.0, 0.0]))
            .with_hvp(|_, _| v(&[0.0, 0.0]));
        let obj = StochasticObjective::deterministic(Manifold::circle(), "d", f).unwrap();
        let x = Point::from_slice(Manifold::circle(), &[0.6, 0.8]).unwrap();
        assert_eq!(obj.noise_field(&x, 0).unwrap().coords(), &v(&[0.0, 0.0]));
        let s = obj.diffusion_vectors(&x, 0.1).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].coords(), &v(&[0.0, 0.0]));
        assert!(matches!(obj.noise_field(&x, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn symmetric_noise_and_diffusion() {
        let grad = |x: &Vector| {
            let g = v(&[-1.0, 0.0]);
            &g - x * x.dot(&g)
        };
        let rot = |x: &Vector| v(&[-x[1], x[0]]) * (0.5 + 0.25 * x[0]);
        let plus: Arc<dyn VectorField> = Arc::new(FnField::new(move |x: &Vector| grad(x) + rot(x)));
        let minus: Arc<dyn VectorField> = Arc::new(FnField::new(move |x: &Vector| grad(x) - rot(x)));
        let obj = linear_circle_objective(vec![plus, minus], FiniteSampleSpace::uniform(2).unwrap());
        let th: f64 = 1.0;
        let x = Point::from_slice(Manifold::circle(), &[th.cos(), th.sin()]).unwrap();
        let gp = obj.noise_field(&x, 0).unwrap();
        let gm = obj.noise_field(&x, 1).unwrap();
        assert!((gp.coords() + gm.coords()).norm() < 1e-15);
        assert!((gp.coords() + rot(x.coords())).norm() < 1e-15);
        assert!(obj.unbiasedness_residual(x.coords()) < 1e-15);

        let eta = 0.1;
        let s = obj.diffusion_vectors(&x, eta).unwrap();
        let c = 0.5 + 0.25 * th.cos();
        let a: f64 = s.iter().map(|si| si.coords().norm_squared()).sum();
        assert!((a - eta * c * c).abs() < 1e-15);
        assert!(obj.diffusion_vectors(&x, 0.0).unwrap().iter().all(|s| s.coords().norm() == 0.0));

        let bound = (obj.grad_at(x.coords()).norm() + 0.75).powi(3);
        assert!(obj.third_moment_diagnostic(&[x]).unwrap() <= bound);
    }

    #[test]
    fn third_moment_of_single_atom() {
        let atom: Arc<dyn VectorField> = Arc::new(FnField::new(|x: &Vector| v(&[-x[1], x[0]]) * 2.0));
        let obj = linear_circle_objective(vec![atom], FiniteSampleSpace::uniform(1).unwrap());
        let x = Point::from_slice(Manifold::circle(), &[1.0, 0.0]).unwrap();
        assert!((obj.third_moment_diagnostic(&[x]).unwrap() - 8.0).abs() < 1e-14);
    }
}

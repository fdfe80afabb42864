//! Scalar test functions and the differential operators built on them:
//! gradients, Hessian forms, first- and second-order Lie applications, the
//! diffusion generator and the one-step Taylor surrogates of RSGD and RSMF.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    DirectionalFn, GradientField, JacobianMode, Manifold, Point, ScalarFn, Vector, VectorField,
    VectorFn,
};
use crate::noise::StochasticObjective;

/// Declared differentiability class of a test function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Smoothness {
    C2,
    C3,
    C4,
}

/// A smooth scalar function on the ambient space (chart, for the Fisher
/// half-plane), optionally with its Euclidean gradient and Hessian-vector
/// product in closed form.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hvp: Option<DirectionalFn>,
    smoothness: Smoothness,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hvp", &self.hvp.is_some())
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, value: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction {
            name: name.into(),
            value: Arc::new(value),
            gradient: None,
            hvp: None,
            smoothness: Smoothness::C4,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// Adds `(x, v) ↦ D²g(x) v`.
    pub fn with_hvp(mut self, hvp: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.hvp = Some(Arc::new(hvp));
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    /// `x ↦ x[i]`.
    pub fn coordinate(i: usize) -> Self {
        TestFunction::new(format!("x{}", i + 1), move |x: &Vector| x[i])
            .with_gradient(move |x: &Vector| {
                let mut e = Vector::zeros(x.len());
                e[i] = 1.0;
                e
            })
            .with_hvp(|x: &Vector, _v: &Vector| Vector::zeros(x.len()))
    }

    pub fn constant(c: f64) -> Self {
        TestFunction::new(format!("const({c})"), move |_x: &Vector| c)
            .with_gradient(|x: &Vector| Vector::zeros(x.len()))
            .with_hvp(|x: &Vector, _v: &Vector| Vector::zeros(x.len()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn ambient_gradient(&self, x: &Vector) -> Option<Vector> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn ambient_hvp(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        self.hvp.as_ref().map(|h| h(x, v))
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.gradient.is_some() && self.hvp.is_some()
    }

    pub(crate) fn gradient_fn(&self) -> Option<VectorFn> {
        self.gradient.clone()
    }

    pub(crate) fn hvp_fn(&self) -> Option<DirectionalFn> {
        self.hvp.clone()
    }

    /// Central-difference gradient of `g ∘ proj` (plain `g` in a chart).
    pub fn fd_ambient_gradient(&self, m: Manifold, x: &Vector, h: f64) -> Result<Vector> {
        let mut out = Vector::zeros(x.len());
        let mut z = x.clone();
        for i in 0..x.len() {
            z[i] = x[i] + h;
            let up = self.eval(&m.project_or_chart(z.clone())?);
            z[i] = x[i] - h;
            let dn = self.eval(&m.project_or_chart(z.clone())?);
            z[i] = x[i];
            out[i] = (up - dn) / (2.0 * h);
        }
        Ok(out)
    }

    /// Largest discrepancy between the Riemannian gradients built from the
    /// analytic and the finite-difference ambient gradients. Normal
    /// components are irrelevant on the manifold and are projected away.
    pub fn gradient_discrepancy(&self, m: Manifold, x: &Vector) -> Result<f64> {
        let Some(df) = self.ambient_gradient(x) else {
            return Err(Error::unsupported(format!("{} has no analytic gradient", self.name)));
        };
        let fd = self.fd_ambient_gradient(m, x, m.default_fd_step(x))?;
        let a = m.gradient_from_ambient(x, &df);
        let b = m.gradient_from_ambient(x, &fd);
        Ok((a - b).amax())
    }

    /// The Riemannian gradient of this function as a vector field. Requires
    /// an analytic ambient gradient.
    pub fn gradient_field(&self, m: Manifold) -> Option<GradientField> {
        Some(GradientField::new(m, self.gradient.clone()?, self.hvp.clone()))
    }
}

/// Riemannian gradient of `g` at `x`, from the analytic ambient gradient
/// when available and central differences otherwise.
pub fn gradient(m: Manifold, g: &TestFunction, x: &Vector) -> Result<Vector> {
    let df = match g.ambient_gradient(x) {
        Some(df) => df,
        None => g.fd_ambient_gradient(m, x, m.default_fd_step(x))?,
    };
    Ok(m.gradient_from_ambient(x, &df))
}

/// `Vg = ⟨grad g, V⟩`.
pub fn lie_apply(m: Manifold, field: &dyn VectorField, g: &TestFunction, x: &Vector) -> Result<f64> {
    let gg = gradient(m, g, x)?;
    Ok(m.inner_at(x, &gg, &field.value(x)))
}

/// Typed form of [`lie_apply`].
pub fn lie_apply_at(field: &dyn VectorField, g: &TestFunction, x: &Point) -> Result<f64> {
    lie_apply(x.manifold(), field, g, x.coords())
}

/// Default step for [`hessian_diagonal_fd`], about `ε^{1/6}`.
pub const HESSIAN_FD_STEP: f64 = 2.5e-3;

/// `d²/dt² g(exp_x(t v))` at `t = 0`, by the five-point stencil.
pub fn hessian_diagonal_fd(m: Manifold, g: &TestFunction, x: &Vector, v: &Vector, h: f64) -> f64 {
    let n = m.norm_at(x, v);
    if n == 0.0 {
        return 0.0;
    }
    let t = h / n;
    let at = |s: f64| g.eval(&m.exp_at(x, &(v * s)));
    let (p1, m1, p2, m2) = (at(t), at(-t), at(2.0 * t), at(-2.0 * t));
    (-p2 + 16.0 * p1 - 30.0 * g.eval(x) + 16.0 * m1 - m2) / (12.0 * t * t)
}

/// Hessian form by polarization of [`hessian_diagonal_fd`].
pub fn hessian_form_fd(m: Manifold, g: &TestFunction, x: &Vector, v: &Vector, w: &Vector, h: f64) -> f64 {
    let q = |u: &Vector| hessian_diagonal_fd(m, g, x, u, h);
    0.25 * (q(&(v + w)) - q(&(v - w)))
}

/// `Hess g(x)[v, w] = ⟨∇_v grad g, w⟩`. Exact when `g` carries an analytic
/// gradient and Hessian-vector product; geodesic finite differences
/// otherwise.
pub fn hessian_form(m: Manifold, g: &TestFunction, x: &Vector, v: &Vector, w: &Vector) -> Result<f64> {
    if g.has_analytic_hessian() {
        let field = g.gradient_field(m).expect("analytic gradient");
        let d = m.covariant_derivative_at(&field, x, v, JacobianMode::Analytic)?;
        Ok(m.inner_at(x, &d, w))
    } else {
        Ok(hessian_form_fd(m, g, x, v, w, HESSIAN_FD_STEP))
    }
}

/// Second-order application `VVg = ⟨Hess g V, V⟩ + (∇_V V) g`.
pub fn second_order_apply(
    m: Manifold,
    field: &dyn VectorField,
    g: &TestFunction,
    x: &Vector,
    mode: JacobianMode,
) -> Result<f64> {
    let v = field.value(x);
    let acc = m.covariant_derivative_at(field, x, &v, mode)?;
    let gg = gradient(m, g, x)?;
    Ok(hessian_form(m, g, x, &v, &v)? + m.inner_at(x, &gg, &acc))
}

/// Drift, noise fields and weights of a Stratonovich diffusion
/// `dX = B dt + √η Σ Ḡᵢ ∘ dWᵢ √ϑᵢ`.
#[derive(Clone)]
pub struct OperatorStack {
    pub manifold: Manifold,
    pub drift: Arc<dyn VectorField>,
    pub noise: Vec<Arc<dyn VectorField>>,
    pub weights: Vec<f64>,
    /// Scale `η` multiplying the noise covariance.
    pub eta: f64,
    pub mode: JacobianMode,
}

impl OperatorStack {
    pub fn new(
        manifold: Manifold,
        drift: Arc<dyn VectorField>,
        noise: Vec<Arc<dyn VectorField>>,
        weights: Vec<f64>,
        eta: f64,
    ) -> Result<Self> {
        if noise.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} noise fields but {} weights",
                noise.len(),
                weights.len()
            )));
        }
        Ok(OperatorStack {
            manifold,
            drift,
            noise,
            weights,
            eta,
            mode: JacobianMode::Auto,
        })
    }

    pub fn with_mode(mut self, mode: JacobianMode) -> Self {
        self.mode = mode;
        self
    }

    /// `Σ ϑᵢ ḠᵢḠᵢ g`.
    fn noise_second_order(&self, g: &TestFunction, x: &Vector) -> Result<f64> {
        let mut s = 0.0;
        for (field, w) in self.noise.iter().zip(&self.weights) {
            s += w * second_order_apply(self.manifold, field.as_ref(), g, x, self.mode)?;
        }
        Ok(s)
    }
}

/// Generator `Lg = Bg + ½η Σ ϑᵢ ḠᵢḠᵢ g` of the Stratonovich diffusion.
pub fn generator_apply(stack: &OperatorStack, g: &TestFunction, x: &Vector) -> Result<f64> {
    let bg = lie_apply(stack.manifold, stack.drift.as_ref(), g, x)?;
    Ok(bg + 0.5 * stack.eta * stack.noise_second_order(g, x)?)
}

/// `g − η⟨grad f, grad g⟩ + ½η² Σ ϑᵢ Hess g[f̃ᵢ, f̃ᵢ]`, the second-order
/// Taylor surrogate of `E g(Z₁)` for one RSGD step.
pub fn one_step_rsgd_expansion(obj: &StochasticObjective, g: &TestFunction, x: &Vector, eta: f64) -> Result<f64> {
    if eta < 0.0 {
        return Err(Error::invalid("learning rate must be non-negative"));
    }
    let m = obj.manifold();
    let gf = obj.grad_at(x);
    let gg = gradient(m, g, x)?;
    let mut quad = 0.0;
    for (i, w) in obj.space().weights().iter().enumerate() {
        let ft = obj.atom_at(x, i);
        quad += w * hessian_form(m, g, x, &ft, &ft)?;
    }
    Ok(g.eval(x) - eta * m.inner_at(x, &gf, &gg) + 0.5 * eta * eta * quad)
}

/// `g + ηBg + ½η²(BBg + Σ ϑᵢ ḠᵢḠᵢ g)` with `η = stack.eta`, the surrogate of
/// `E g(X_η)` for the modified flow.
pub fn one_step_rsmf_expansion(stack: &OperatorStack, g: &TestFunction, x: &Vector) -> Result<f64> {
    let eta = stack.eta;
    let m = stack.manifold;
    let bg = lie_apply(m, stack.drift.as_ref(), g, x)?;
    let bbg = second_order_apply(m, stack.drift.as_ref(), g, x, stack.mode)?;
    let gg = stack.noise_second_order(g, x)?;
    Ok(g.eval(x) + eta * bg + 0.5 * eta * eta * (bbg + gg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FnField, ProjectedAffineField};
    use nalgebra::DMatrix;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn on_circle(t: f64) -> Vector {
        v(&[t.cos(), t.sin()])
    }

    fn rotation_field(c: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> FnField<impl Fn(&Vector) -> Vector + Send + Sync> {
        FnField::new(move |x: &Vector| v(&[-x[1], x[0]]) * c(x))
    }

    #[test]
    fn lie_apply_examples() {
        let m = Manifold::circle();
        // g(θ) = −cos θ, V = ∂θ at θ = π/2.
        let g = TestFunction::coordinate(0);
        let neg = TestFunction::new("-x1", |x: &Vector| -x[0]).with_gradient(|_| v(&[-1.0, 0.0]));
        let x = on_circle(std::f64::consts::FRAC_PI_2);
        let unit = rotation_field(|_| 1.0);
        assert!((lie_apply(m, &unit, &neg, &x).unwrap() - 1.0).abs() < 1e-15);
        let zero = FnField::new(|x: &Vector| Vector::zeros(x.len()));
        assert_eq!(lie_apply(m, &zero, &g, &x).unwrap(), 0.0);

        let s2 = Manifold::sphere(2).unwrap();
        let g = TestFunction::new("q", |x: &Vector| x[0] * x[1] + x[2])
            .with_gradient(|x: &Vector| v(&[x[1], x[0], 1.0]));
        let gf = g.gradient_field(s2).unwrap();
        let x = v(&[0.6, 0.0, 0.8]);
        let gg = gradient(s2, &g, &x).unwrap();
        assert!((lie_apply(s2, &gf, &g, &x).unwrap() - gg.norm_squared()).abs() < 1e-15);
    }

    #[test]
    fn gradient_falls_back_to_finite_differences() {
        let s2 = Manifold::sphere(2).unwrap();
        let with = TestFunction::new("q", |x: &Vector| x[0] * x[1] + x[2].powi(3))
            .with_gradient(|x: &Vector| v(&[x[1], x[0], 3.0 * x[2] * x[2]]));
        let without = TestFunction::new("q", |x: &Vector| x[0] * x[1] + x[2].powi(3));
        let x = v(&[0.48, 0.6, 0.64]);
        let a = gradient(s2, &with, &x).unwrap();
        let b = gradient(s2, &without, &x).unwrap();
        assert!((a - b).amax() < 1e-8);
        assert!(with.gradient_discrepancy(s2, &x).unwrap() < 1e-8);

        let bad = TestFunction::new("q", |x: &Vector| x[0]).with_gradient(|_| v(&[0.0, 1.0, 0.0]));
        assert!(bad.gradient_discrepancy(s2, &x).unwrap() > 0.1);
    }

    #[test]
    fn hessian_examples() {
        let m = Manifold::circle();
        let neg = TestFunction::new("-x1", |x: &Vector| -x[0])
            .with_gradient(|_| v(&[-1.0, 0.0]))
            .with_hvp(|_, _| v(&[0.0, 0.0]));
        let x = on_circle(0.0);
        let d = v(&[0.0, 1.0]);
        assert!((hessian_form(m, &neg, &x, &d, &d).unwrap() - 1.0).abs() < 1e-15);
        assert!((hessian_form_fd(m, &neg, &x, &d, &d, HESSIAN_FD_STEP) - 1.0).abs() < 1e-9);
        assert_eq!(hessian_form(m, &neg, &x, &Vector::zeros(2), &d).unwrap(), 0.0);

        // Linear g on the sphere: Hess g(v, v) = −g(x)|v|².
        let s2 = Manifold::sphere(2).unwrap();
        let g = TestFunction::new("l", |x: &Vector| 2.0 * x[0] - x[2])
            .with_gradient(|_| v(&[2.0, 0.0, -1.0]))
            .with_hvp(|_, _| Vector::zeros(3));
        let x = v(&[1.0, 0.0, 0.0]);
        let e2 = v(&[0.0, 1.0, 0.0]);
        let exact = hessian_form(s2, &g, &x, &e2, &e2).unwrap();
        assert!((exact + 2.0).abs() < 1e-14);
        assert!((hessian_form_fd(s2, &g, &x, &e2, &e2, HESSIAN_FD_STEP) - exact).abs() < 1e-6);
    }

    #[test]
    fn generator_reduces_to_transport_without_noise() {
        let s2 = Manifold::sphere(2).unwrap();
        let a = DMatrix::from_diagonal(&v(&[1.0, 0.5, -0.3]));
        let gf = ProjectedAffineField::new(s2, a, Vector::zeros(3));
        let neg: Arc<dyn VectorField> = Arc::new(FnField::new(move |x: &Vector| -gf.value(x)));
        let g = TestFunction::coordinate(1);
        let x = v(&[0.48, 0.6, 0.64]);
        let stack = OperatorStack::new(s2, neg.clone(), vec![], vec![], 0.3).unwrap();
        let want = lie_apply(s2, neg.as_ref(), &g, &x).unwrap();
        assert_eq!(generator_apply(&stack, &g, &x).unwrap(), want);

        let c = TestFunction::constant(2.0);
        assert_eq!(generator_apply(&stack, &c, &x).unwrap(), 0.0);
    }

    #[test]
    fn circle_generator_matches_chart_form() {
        // B = b(θ)∂θ, Ḡ = ±c(θ)∂θ: Lg = (b + ½η c c′) g′ + ½η c² g″ in the
        // angle chart.
        let m = Manifold::circle();
        let eta = 0.2;
        let b = |x: &Vector| -x[1] + 0.3 * x[0];
        let c = |x: &Vector| 0.5 + 0.25 * x[0];
        let drift: Arc<dyn VectorField> = Arc::new(rotation_field(b));
        let plus: Arc<dyn VectorField> = Arc::new(rotation_field(c));
        let minus: Arc<dyn VectorField> = Arc::new(rotation_field(move |x| -c(x)));
        let stack = OperatorStack::new(m, drift, vec![plus, minus], vec![0.5, 0.5], eta)
            .unwrap()
            .with_mode(JacobianMode::FiniteDifference);
        let g = TestFunction::coordinate(1);
        for th in [0.3, 1.0, 2.5, -1.7] {
            let x = on_circle(th);
            let dc = -0.25 * th.sin();
            let chart = (b(&x) + 0.5 * eta * c(&x) * dc) * th.cos() + 0.5 * eta * c(&x).powi(2) * (-th.sin());
            let got = generator_apply(&stack, &g, &x).unwrap();
            assert!((got - chart).abs() < 1e-8, "θ={th}: {got} vs {chart}");
        }
    }
}

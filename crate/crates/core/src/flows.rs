//! Gradient flow `ẋ = −grad f(x)` and the stochastic modified flow
//! `dX = B dt + √η Σ Ḡᵢ ∘ dWᵢ √ϑᵢ` with the corrected drift
//! `B = −grad f − ½η(∇_{grad f} grad f + Σ ϑᵢ ∇_{Ḡᵢ} Ḡᵢ)`.
//!
//! The SDE is integrated by geodesic Euler–Maruyama with the Itô-equivalent
//! intrinsic drift `B + ½η Σ ϑᵢ ∇_{Ḡᵢ} Ḡᵢ`, which reduces to
//! `−grad f − ½η ∇_{grad f} grad f`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calculus::{OperatorStack, TestFunction};
use crate::error::{Error, Result};
use crate::geometry::{JacobianMode, Manifold, ManifoldKind, Vector, VectorField};
use crate::noise::StochasticObjective;
use crate::rng;
use crate::rsgd::{blocked_mean, McEstimate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeScheme {
    #[default]
    GeodesicEulerMaruyama,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeScheme {
    /// Ambient RK4 on `z ↦ −grad f(proj z)`, projected after every step.
    #[default]
    ProjectedRk4,
    /// RK4 in normal coordinates at the current point, mapped back by `exp`.
    /// Circle, sphere and hyperboloid only.
    GeodesicRk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub substep: f64,
    pub scheme: SdeScheme,
    pub ode_scheme: OdeScheme,
    pub seed: u64,
    pub mode: JacobianMode,
}

impl IntegratorConfig {
    pub fn new(substep: f64, seed: u64) -> Self {
        IntegratorConfig {
            substep,
            scheme: SdeScheme::GeodesicEulerMaruyama,
            ode_scheme: OdeScheme::ProjectedRk4,
            seed,
            mode: JacobianMode::Auto,
        }
    }

    pub fn with_ode_scheme(mut self, s: OdeScheme) -> Self {
        self.ode_scheme = s;
        self
    }

    pub fn with_mode(mut self, mode: JacobianMode) -> Self {
        self.mode = mode;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.substep > 0.0) || !self.substep.is_finite() {
            return Err(Error::invalid(format!("substep {} must be positive", self.substep)));
        }
        Ok(())
    }
}

/// Default SDE substep for order-2 experiments: `min(1e-3, η³)`.
pub fn default_substep(eta: f64) -> f64 {
    1e-3f64.min(eta.powi(3))
}

fn step_count(t_end: f64, h: f64) -> usize {
    ((t_end / h) - 1e-9).ceil().max(1.0) as usize
}

// Gradient flow.

/// Endpoint of the gradient flow at time `t_end`, by RK4 with steps no longer
/// than `cfg.substep`.
pub fn gradient_flow(obj: &StochasticObjective, x0: &Vector, t_end: f64, cfg: &IntegratorConfig) -> Result<Vector> {
    gradient_flow_trajectory(obj, x0, t_end, cfg, |_, _| {})
}

/// As [`gradient_flow`], reporting `(t, x)` at every step (including `t = 0`).
pub fn gradient_flow_trajectory<F>(
    obj: &StochasticObjective,
    x0: &Vector,
    t_end: f64,
    cfg: &IntegratorConfig,
    mut visit: F,
) -> Result<Vector>
where
    F: FnMut(f64, &Vector),
{
    cfg.check()?;
    if !(t_end >= 0.0) {
        return Err(Error::invalid(format!("horizon {t_end} must be non-negative")));
    }
    visit(0.0, x0);
    if t_end == 0.0 {
        return Ok(x0.clone());
    }
    let m = obj.manifold();
    if cfg.ode_scheme == OdeScheme::GeodesicRk4 && !has_closed_form_dexp(m) {
        return Err(Error::unsupported(format!("geodesic RK4 is not available on {m}")));
    }
    let n = step_count(t_end, cfg.substep);
    let h = t_end / n as f64;
    let mut x = x0.clone();
    for k in 1..=n {
        x = match cfg.ode_scheme {
            OdeScheme::ProjectedRk4 => projected_rk4_step(obj, &x, h)?,
            OdeScheme::GeodesicRk4 => geodesic_rk4_step(obj, &x, h),
        };
        visit(k as f64 * h, &x);
    }
    Ok(x)
}

fn projected_rk4_step(obj: &StochasticObjective, x: &Vector, h: f64) -> Result<Vector> {
    let m = obj.manifold();
    let field = |z: &Vector| -> Result<Vector> {
        let p = m.project_or_chart(z.clone())?;
        Ok(-obj.grad_at(&p))
    };
    let k1 = field(x)?;
    let k2 = field(&(x + &k1 * (0.5 * h)))?;
    let k3 = field(&(x + &k2 * (0.5 * h)))?;
    let k4 = field(&(x + &k3 * h))?;
    m.project_or_chart(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn has_closed_form_dexp(m: Manifold) -> bool {
    matches!(
        m.kind(),
        ManifoldKind::Circle | ManifoldKind::Sphere { .. } | ManifoldKind::Hyperboloid { .. }
    )
}

/// Solves `d exp_x(u)[w] = y` for `w`, where `y` is tangent at `exp_x(u)`.
fn dexp_inverse(m: Manifold, x: &Vector, u: &Vector, y: &Vector) -> Vector {
    let th = m.norm_at(x, u);
    if th < 1e-12 {
        return y.clone();
    }
    let uh = u / th;
    let (t_hat, scale) = match m.kind() {
        ManifoldKind::Hyperboloid { .. } => (x * th.sinh() + &uh * th.cosh(), th.sinh() / th),
        _ => (-x * th.sin() + &uh * th.cos(), th.sin() / th),
    };
    let a = m.inner_at(x, y, &t_hat);
    &uh * a + (y - &t_hat * a) / scale
}

fn geodesic_rk4_step(obj: &StochasticObjective, x: &Vector, h: f64) -> Vector {
    let m = obj.manifold();
    let rhs = |u: &Vector| -> Vector {
        let y = m.exp_at(x, u);
        dexp_inverse(m, x, u, &(-obj.grad_at(&y)))
    };
    let k1 = rhs(&Vector::zeros(x.len()));
    let k2 = rhs(&(&k1 * (0.5 * h)));
    let k3 = rhs(&(&k2 * (0.5 * h)));
    let k4 = rhs(&(&k3 * h));
    m.exp_at(x, &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

// Modified flow coefficients.

/// Coefficients of the stochastic modified flow at learning rate `η`.
#[derive(Clone)]
pub struct RsmfCoefficients {
    obj: StochasticObjective,
    eta: f64,
    mode: JacobianMode,
}

/// Every coefficient at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct RsmfTerms {
    pub grad: Vector,
    /// `∇_{grad f} grad f`.
    pub grad_acceleration: Vector,
    /// `Ḡᵢ`.
    pub noise: Vec<Vector>,
    /// `Σ ϑᵢ ∇_{Ḡᵢ} Ḡᵢ`.
    pub noise_acceleration: Vector,
    pub drift: Vector,
    pub ito_drift: Vector,
    /// `σᵢ = √(ηϑᵢ) Ḡᵢ`.
    pub diffusion: Vec<Vector>,
}

impl RsmfCoefficients {
    pub fn new(obj: StochasticObjective, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("learning rate {eta} must be non-negative")));
        }
        Ok(RsmfCoefficients {
            obj,
            eta,
            mode: JacobianMode::Auto,
        })
    }

    pub fn with_mode(mut self, mode: JacobianMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn objective(&self) -> &StochasticObjective {
        &self.obj
    }

    pub fn terms_at(&self, x: &Vector) -> Result<RsmfTerms> {
        let m = self.obj.manifold();
        let eta = self.eta;
        let grad_field = self.obj.grad_field();
        let grad = grad_field.value(x);
        let grad_acceleration = m.covariant_derivative_at(&grad_field, x, &grad, self.mode)?;
        let mut noise = Vec::with_capacity(self.obj.atom_count());
        let mut noise_acceleration = Vector::zeros(x.len());
        let mut diffusion = Vec::with_capacity(self.obj.atom_count());
        for (i, w) in self.obj.space().weights().iter().enumerate() {
            let field = self.obj.noise(i)?;
            let gi = field.value(x);
            let acc = m.covariant_derivative_at(&field, x, &gi, self.mode)?;
            noise_acceleration.axpy(*w, &acc, 1.0);
            diffusion.push(&gi * (eta * w).sqrt());
            noise.push(gi);
        }
        let drift = -&grad - (&grad_acceleration + &noise_acceleration) * (0.5 * eta);
        let ito_drift = &drift + &noise_acceleration * (0.5 * eta);
        Ok(RsmfTerms {
            grad,
            grad_acceleration,
            noise,
            noise_acceleration,
            drift,
            ito_drift,
            diffusion,
        })
    }

    /// `B(x)`.
    pub fn drift_at(&self, x: &Vector) -> Result<Vector> {
        Ok(self.terms_at(x)?.drift)
    }

    /// `B(x) + ½η Σ ϑᵢ ∇_{Ḡᵢ} Ḡᵢ(x)`.
    pub fn ito_drift_at(&self, x: &Vector) -> Result<Vector> {
        Ok(self.terms_at(x)?.ito_drift)
    }

    pub fn diffusion_at(&self, x: &Vector) -> Vec<Vector> {
        self.obj.diffusion_vectors_at(x, self.eta)
    }

    /// `‖ito_drift + grad f + ½η ∇_{grad f} grad f‖`.
    pub fn cancellation_residual(&self, x: &Vector) -> Result<f64> {
        let t = self.terms_at(x)?;
        Ok((t.ito_drift + &t.grad + t.grad_acceleration * (0.5 * self.eta)).norm())
    }

    pub fn drift_field(&self) -> DriftField {
        DriftField {
            coeffs: self.clone(),
            ito: false,
        }
    }

    pub fn ito_drift_field(&self) -> DriftField {
        DriftField {
            coeffs: self.clone(),
            ito: true,
        }
    }

    /// Drift and noise fields as an [`OperatorStack`] with scale `η`.
    pub fn operator_stack(&self) -> Result<OperatorStack> {
        let noise = (0..self.obj.atom_count())
            .map(|i| self.obj.noise(i).map(|f| Arc::new(f) as Arc<dyn VectorField>))
            .collect::<Result<Vec<_>>>()?;
        Ok(OperatorStack::new(
            self.obj.manifold(),
            Arc::new(self.drift_field()),
            noise,
            self.obj.space().weights().to_vec(),
            self.eta,
        )?
        .with_mode(self.mode))
    }
}

/// `B` (or its Itô form) as a vector field. Its Jacobian is not available in
/// closed form, so covariant derivatives of it use finite differences.
#[derive(Clone)]
pub struct DriftField {
    coeffs: RsmfCoefficients,
    ito: bool,
}

impl VectorField for DriftField {
    fn value(&self, x: &Vector) -> Vector {
        let t = self
            .coeffs
            .terms_at(x)
            .expect("drift coefficients are defined on the manifold");
        if self.ito {
            t.ito_drift
        } else {
            t.drift
        }
    }
}

// SDE integration.

fn substeps(t_end: f64, delta: f64) -> Result<usize> {
    if t_end == 0.0 {
        return Ok(0);
    }
    if !(delta <= t_end * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!("substep {delta} exceeds the horizon {t_end}")));
    }
    let n = (t_end / delta).round();
    if (n * delta - t_end).abs() > 1e-12 * t_end.max(1.0) {
        return Err(Error::invalid(format!(
            "horizon {t_end} is not a multiple of the substep {delta}"
        )));
    }
    Ok(n as usize)
}

/// One path of geodesic Euler–Maruyama,
/// `x ← exp_x(b(x) δ + Σ σᵢ(x) ΔWᵢ)`, reporting `(t, x)` after every substep.
pub fn rsmf_path<F>(
    coeffs: &RsmfCoefficients,
    x0: &Vector,
    t_end: f64,
    cfg: &IntegratorConfig,
    path: u64,
    mut visit: F,
) -> Result<Vector>
where
    F: FnMut(f64, &Vector),
{
    cfg.check()?;
    if !(t_end >= 0.0) {
        return Err(Error::invalid(format!("horizon {t_end} must be non-negative")));
    }
    let n = substeps(t_end, cfg.substep)?;
    let m = coeffs.obj.manifold();
    let delta = cfg.substep;
    let sd = delta.sqrt();
    let mut rng = rng::stream(cfg.seed, path);
    let mut x = x0.clone();
    visit(0.0, &x);
    for k in 1..=n {
        rng::reset_step(&mut rng, k as u64);
        let t = coeffs.terms_at(&x)?;
        let mut step = t.ito_drift * delta;
        for s in &t.diffusion {
            let z: f64 = rng.sample(StandardNormal);
            step.axpy(z * sd, s, 1.0);
        }
        x = m.exp_at(&x, &step);
        visit(k as f64 * delta, &x);
    }
    Ok(x)
}

/// Endpoint of one path.
pub fn rsmf_integrate(coeffs: &RsmfCoefficients, x0: &Vector, t_end: f64, cfg: &IntegratorConfig, path: u64) -> Result<Vector> {
    rsmf_path(coeffs, x0, t_end, cfg, path, |_, _| {})
}

/// Monte Carlo estimate of `E g(X_T)`.
pub fn rsmf_mc_expectation(
    coeffs: &RsmfCoefficients,
    g: &TestFunction,
    x0: &Vector,
    t_end: f64,
    cfg: &IntegratorConfig,
    n_paths: u64,
) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(Error::invalid("Monte Carlo needs at least two paths"));
    }
    substeps(t_end, cfg.substep)?;
    let acc = blocked_mean(n_paths, |path| {
        rsmf_integrate(coeffs, x0, t_end, cfg, path).map(|z| g.eval(&z))
    })?;
    Ok(acc.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FnField;
    use crate::noise::FiniteSampleSpace;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn at(th: f64) -> Vector {
        v(&[th.cos(), th.sin()])
    }

    const C0: f64 = 0.5;
    const C1: f64 = 0.25;

    /// f = −x₁, f̃ = grad f ± c(x₁) J x, with analytic Jacobians.
    fn circle() -> StochasticObjective {
        let f = TestFunction::new("f", |x: &Vector| -x[0])
            .with_gradient(|_| v(&[-1.0, 0.0]))
            .with_hvp(|_, _| v(&[0.0, 0.0]));
        let m = Manifold::circle();
        let gf = f.gradient_field(m).unwrap();
        let atom = |sign: f64| -> Arc<dyn VectorField> {
            let (g1, g2) = (gf.clone(), gf.clone());
            Arc::new(FnField::with_derivative(
                move |x: &Vector| g1.value(x) + v(&[-x[1], x[0]]) * (sign * (C0 + C1 * x[0])),
                move |x: &Vector, d: &Vector| {
                    g2.ambient_derivative(x, d).unwrap()
                        + (v(&[-x[1], x[0]]) * (C1 * d[0]) + v(&[-d[1], d[0]]) * (C0 + C1 * x[0])) * sign
                },
            ))
        };
        StochasticObjective::new(m, "circle", f, FiniteSampleSpace::uniform(2).unwrap(), vec![atom(1.0), atom(-1.0)])
            .unwrap()
    }

    fn chart(x: &Vector, w: &Vector) -> f64 {
        -x[1] * w[0] + x[0] * w[1]
    }

    #[test]
    fn gradient_flow_matches_closed_form() {
        let obj = circle();
        let th0: f64 = 1.0;
        let exact = 2.0 * ((th0 / 2.0).tan() * (-1f64).exp()).atan();
        for scheme in [OdeScheme::ProjectedRk4, OdeScheme::GeodesicRk4] {
            let cfg = IntegratorConfig::new(1e-2, 0).with_ode_scheme(scheme);
            let x = gradient_flow(&obj, &at(th0), 1.0, &cfg).unwrap();
            assert!((x - at(exact)).norm() < 1e-8, "{scheme:?}");
        }
        let cfg = IntegratorConfig::new(1e-2, 0);
        assert_eq!(gradient_flow(&obj, &at(th0), 0.0, &cfg).unwrap(), at(th0));
    }

    #[test]
    fn gradient_flow_is_fourth_order() {
        let obj = circle();
        let th0: f64 = 1.0;
        let exact = at(2.0 * ((th0 / 2.0).tan() * (-1f64).exp()).atan());
        let err = |h: f64| {
            let cfg = IntegratorConfig::new(h, 0);
            (gradient_flow(&obj, &at(th0), 1.0, &cfg).unwrap() - &exact).norm()
        };
        let (e1, e2) = (err(0.2), err(0.1));
        assert!((e1 / e2).log2() > 3.5, "{e1} {e2}");
    }

    #[test]
    fn geodesic_rk4_rejects_other_kinds() {
        let m = Manifold::fisher_half_plane();
        let f = TestFunction::new("f", |x: &Vector| x[0]).with_gradient(|_| v(&[1.0, 0.0]));
        let obj = StochasticObjective::deterministic(m, "f", f).unwrap();
        let cfg = IntegratorConfig::new(0.1, 0).with_ode_scheme(OdeScheme::GeodesicRk4);
        assert!(matches!(gradient_flow(&obj, &v(&[0.0, 1.0]), 1.0, &cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn chart_coefficients() {
        let eta = 0.1;
        let coeffs = RsmfCoefficients::new(circle(), eta).unwrap();
        for th in [0.0, 0.4, 1.0, 2.9] {
            let x = at(th);
            let t = coeffs.terms_at(&x).unwrap();
            let c = C0 + C1 * th.cos();
            let dc = -C1 * th.sin();
            let b = -th.sin() - 0.5 * eta * (th.sin() * th.cos() + c * dc);
            assert!((chart(&x, &t.drift) - b).abs() < 1e-14);
            let ito = -th.sin() - 0.5 * eta * th.sin() * th.cos();
            assert!((chart(&x, &t.ito_drift) - ito).abs() < 1e-14);
            assert!(coeffs.cancellation_residual(&x).unwrap() < 1e-14);
            let a: f64 = t.diffusion.iter().map(|s| chart(&x, s).powi(2)).sum();
            assert!((a - eta * c * c).abs() < 1e-14);
        }
        let zero = RsmfCoefficients::new(circle(), 0.0).unwrap();
        let x = at(1.0);
        let t = zero.terms_at(&x).unwrap();
        assert_eq!(t.drift, -&t.grad);
        assert_eq!(t.ito_drift, -&t.grad);
    }

    #[test]
    fn finite_difference_jacobians_agree() {
        let eta = 0.2;
        let a = RsmfCoefficients::new(circle(), eta).unwrap().with_mode(JacobianMode::Analytic);
        let b = RsmfCoefficients::new(circle(), eta).unwrap().with_mode(JacobianMode::FiniteDifference);
        let x = at(0.7);
        let d = (a.drift_at(&x).unwrap() - b.drift_at(&x).unwrap()).norm();
        assert!(d < 1e-8, "{d}");
        assert!(b.cancellation_residual(&x).unwrap() < 1e-5);
    }

    #[test]
    fn zero_noise_flow_tracks_gradient_flow() {
        let f = TestFunction::new("f", |x: &Vector| -x[0])
            .with_gradient(|_| v(&[-1.0, 0.0]))
            .with_hvp(|_, _| v(&[0.0, 0.0]));
        let obj = StochasticObjective::deterministic(Manifold::circle(), "f", f).unwrap();
        let coeffs = RsmfCoefficients::new(obj.clone(), 0.0).unwrap();
        let cfg = IntegratorConfig::new(1e-4, 0);
        let x = rsmf_integrate(&coeffs, &at(1.0), 0.5, &cfg, 0).unwrap();
        let y = gradient_flow(&obj, &at(1.0), 0.5, &cfg).unwrap();
        assert!((x - y).norm() < 1e-4);

        let est = rsmf_mc_expectation(&coeffs, &TestFunction::coordinate(1), &at(1.0), 0.01, &IntegratorConfig::new(1e-3, 3), 8)
            .unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_eq!(rsmf_integrate(&coeffs, &at(1.0), 0.0, &cfg, 0).unwrap(), at(1.0));
    }

    #[test]
    fn horizon_must_be_a_substep_multiple() {
        let coeffs = RsmfCoefficients::new(circle(), 0.1).unwrap();
        assert!(rsmf_integrate(&coeffs, &at(1.0), 0.5, &IntegratorConfig::new(0.3, 0), 0).is_err());
        assert!(rsmf_integrate(&coeffs, &at(1.0), 0.1, &IntegratorConfig::new(0.2, 0), 0).is_err());
    }

    #[test]
    fn paths_stay_on_the_circle() {
        let coeffs = RsmfCoefficients::new(circle(), 0.1).unwrap();
        let mut worst: f64 = 0.0;
        rsmf_path(&coeffs, &at(1.0), 2.0, &IntegratorConfig::new(1e-3, 9), 0, |_, x| {
            worst = worst.max((x.norm() - 1.0).abs())
        })
        .unwrap();
        assert!(worst < 1e-9);
    }
}

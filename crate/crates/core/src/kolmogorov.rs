//! Backward Kolmogorov solver on the circle, used as a deterministic
//! reference for expectations of the modified flow.
//!
//! In the angle chart the flow has generator `L u = b u′ + ½ a u″`, and
//! `u(t, θ) = E g(X_t(θ))` solves `∂_t u = L u`, `u(0, ·) = g`.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::calculus::TestFunction;
use crate::error::{Error, Result};
use crate::flows::RsmfCoefficients;
use crate::geometry::{ManifoldKind, Vector};
use crate::noise::StochasticObjective;

/// Default cap on RK4 time steps for one solve.
pub const DEFAULT_STEP_BUDGET: usize = 2_000_000;

type Periodic = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Drift `b(θ)` and diffusion `a(θ) ≥ 0` of a diffusion on the circle.
#[derive(Clone)]
pub struct CircleGenerator {
    drift: Periodic,
    diffusion: Periodic,
}

impl CircleGenerator {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CircleGenerator {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
        }
    }

    pub fn drift(&self, th: f64) -> f64 {
        (self.drift)(th)
    }

    pub fn diffusion(&self, th: f64) -> f64 {
        (self.diffusion)(th)
    }
}

fn on_circle(th: f64) -> Vector {
    Vector::from_vec(vec![th.cos(), th.sin()])
}

/// Angular component of a tangent vector at `x`.
fn angular(x: &Vector, w: &Vector) -> f64 {
    -x[1] * w[0] + x[0] * w[1]
}

/// Chart generator of the modified flow of a circle objective: `b` is the
/// angular Itô drift and `a = Σ σᵢ²`.
pub fn circle_generator(obj: &StochasticObjective, eta: f64) -> Result<CircleGenerator> {
    if obj.manifold().kind() != ManifoldKind::Circle {
        return Err(Error::unsupported(format!(
            "the chart generator needs a circle objective, got {}",
            obj.manifold()
        )));
    }
    let coeffs = RsmfCoefficients::new(obj.clone(), eta)?;
    let c2 = coeffs.clone();
    // Evaluate once up front so a broken objective fails here, not mid-solve.
    coeffs.terms_at(&on_circle(0.0))?;
    Ok(CircleGenerator::new(
        move |th| {
            let x = on_circle(th);
            angular(&x, &coeffs.ito_drift_at(&x).expect("coefficients defined on the circle"))
        },
        move |th| {
            let x = on_circle(th);
            c2.diffusion_at(&x).iter().map(|s| angular(&x, s).powi(2)).sum()
        },
    ))
}

/// `E g(X_T(θ₀))` on a uniform periodic grid of `grid_n` points.
pub fn solve_backward(gen: &CircleGenerator, g: &TestFunction, t_end: f64, theta0: f64, grid_n: usize) -> Result<f64> {
    solve_backward_with_budget(gen, g, t_end, theta0, grid_n, DEFAULT_STEP_BUDGET)
}

/// [`solve_backward`] with an explicit cap on time steps.
pub fn solve_backward_with_budget(
    gen: &CircleGenerator,
    g: &TestFunction,
    t_end: f64,
    theta0: f64,
    grid_n: usize,
    step_budget: usize,
) -> Result<f64> {
    if grid_n < 256 || !grid_n.is_power_of_two() {
        return Err(Error::invalid(format!("grid size {grid_n} must be a power of two ≥ 256")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("horizon {t_end} must be non-negative")));
    }
    if t_end == 0.0 {
        return Ok(g.eval(&on_circle(theta0)));
    }
    let n = grid_n;
    let h = TAU / n as f64;
    let theta: Vec<f64> = (0..n).map(|j| j as f64 * h).collect();
    let b: Vec<f64> = theta.iter().map(|t| gen.drift(*t)).collect();
    let a: Vec<f64> = theta.iter().map(|t| gen.diffusion(*t)).collect();
    if let Some(bad) = a.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("diffusion coefficient {bad} is negative")));
    }
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let b_max = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut dt = t_end;
    if a_max > 0.0 {
        dt = dt.min(0.4 * h * h / a_max);
    }
    if b_max > 0.0 {
        dt = dt.min(h / b_max);
    }
    let steps = (t_end / dt).ceil();
    if steps > step_budget as f64 {
        return Err(Error::Configuration(format!(
            "stable time stepping needs {steps} steps, budget is {step_budget}"
        )));
    }
    let steps = steps as usize;
    let dt = t_end / steps as f64;

    // Fold the stencil weights into per-node coefficients.
    let c1: Vec<f64> = b.iter().map(|bj| bj / (12.0 * h)).collect();
    let c2: Vec<f64> = a.iter().map(|aj| 0.5 * aj / (12.0 * h * h)).collect();
    let apply = |u: &[f64], out: &mut [f64]| {
        for j in 0..n {
            let m2 = u[(j + n - 2) % n];
            let m1 = u[(j + n - 1) % n];
            let p1 = u[(j + 1) % n];
            let p2 = u[(j + 2) % n];
            let d1 = -p2 + 8.0 * p1 - 8.0 * m1 + m2;
            let d2 = -p2 + 16.0 * p1 - 30.0 * u[j] + 16.0 * m1 - m2;
            out[j] = c1[j] * d1 + c2[j] * d2;
        }
    };

    let mut u: Vec<f64> = theta.iter().map(|t| g.eval(&on_circle(*t))).collect();
    let mut k = vec![vec![0.0; n]; 4];
    let mut stage = vec![0.0; n];
    for _ in 0..steps {
        apply(&u, &mut k[0]);
        for j in 0..n {
            stage[j] = u[j] + 0.5 * dt * k[0][j];
        }
        apply(&stage, &mut k[1]);
        for j in 0..n {
            stage[j] = u[j] + 0.5 * dt * k[1][j];
        }
        apply(&stage, &mut k[2]);
        for j in 0..n {
            stage[j] = u[j] + dt * k[2][j];
        }
        apply(&stage, &mut k[3]);
        for j in 0..n {
            u[j] += dt / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }
    }
    Ok(interpolate_periodic(&u, theta0))
}

/// Cubic Lagrange interpolation on a uniform periodic grid over `[0, 2π)`.
fn interpolate_periodic(u: &[f64], th: f64) -> f64 {
    let n = u.len();
    let h = TAU / n as f64;
    let s = th.rem_euclid(TAU) / h;
    let j = s.floor();
    let r = s - j;
    let j = j as usize % n;
    let at = |k: isize| u[(j as isize + k).rem_euclid(n as isize) as usize];
    let w_m1 = -r * (r - 1.0) * (r - 2.0) / 6.0;
    let w_0 = (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0;
    let w_p1 = -(r + 1.0) * r * (r - 2.0) / 2.0;
    let w_p2 = (r + 1.0) * r * (r - 1.0) / 6.0;
    w_m1 * at(-1) + w_0 * at(0) + w_p1 * at(1) + w_p2 * at(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine() -> TestFunction {
        TestFunction::coordinate(1)
    }

    #[test]
    fn zero_horizon_returns_g() {
        let gen = CircleGenerator::new(|t| -t.sin(), |_| 0.1);
        assert_eq!(solve_backward(&gen, &sine(), 0.0, 1.0, 256).unwrap(), 1f64.sin());
    }

    #[test]
    fn constants_are_preserved() {
        let gen = CircleGenerator::new(|t| -t.sin() + 0.3, |t| 0.05 * (1.0 + 0.5 * t.cos()));
        let u = solve_backward(&gen, &TestFunction::constant(1.0), 0.7, 2.0, 512).unwrap();
        assert!((u - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn pure_transport_matches_characteristics() {
        // θ̇ = −sin θ has θ(t) = 2 atan(tan(θ₀/2) e^{−t}).
        let gen = CircleGenerator::new(|t| -t.sin(), |_| 0.0);
        let (th0, t) = (1.0f64, 0.5f64);
        let exact = (2.0 * ((th0 / 2.0).tan() * (-t).exp()).atan()).sin();
        let u = solve_backward(&gen, &sine(), t, th0, 2048).unwrap();
        assert!((u - exact).abs() < 1e-8, "{u} vs {exact}");
    }

    #[test]
    fn pure_diffusion_matches_heat_kernel() {
        // u_t = ½a u″ with g = sin: u = e^{−aT/2} sin θ.
        let a: f64 = 0.3;
        let gen = CircleGenerator::new(|_| 0.0, move |_| a);
        let u = solve_backward(&gen, &sine(), 0.4, 0.9, 512).unwrap();
        assert!((u - (-0.5 * a * 0.4f64).exp() * 0.9f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn grid_validation_and_budget() {
        let gen = CircleGenerator::new(|t| -t.sin(), |_| 0.1);
        assert!(matches!(solve_backward(&gen, &sine(), 0.5, 1.0, 300), Err(Error::InvalidArgument(_))));
        assert!(matches!(solve_backward(&gen, &sine(), 0.5, 1.0, 128), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            solve_backward_with_budget(&gen, &sine(), 0.5, 1.0, 2048, 10),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn interpolation_is_exact_for_cubics_in_the_stencil() {
        let n = 256;
        let h = TAU / n as f64;
        let u: Vec<f64> = (0..n).map(|j| (j as f64 * h).sin()).collect();
        for th in [0.0, 0.123, 3.0, 6.2] {
            assert!((interpolate_periodic(&u, th) - th.sin()).abs() < 1e-9);
        }
    }
}

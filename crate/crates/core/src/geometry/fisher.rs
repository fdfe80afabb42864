//! Upper half-plane of `(μ, σ)` with the Fisher metric `diag(1/σ², 2/σ²)` of
//! the univariate normal family. Constant curvature −1/2.

use super::Vector;

pub(crate) fn metric_diag(x: &Vector) -> (f64, f64) {
    let s2 = x[1] * x[1];
    (1.0 / s2, 2.0 / s2)
}

/// Christoffel contraction `Γ(v, w)` in the `(μ, σ)` chart.
pub(crate) fn christoffel(x: &Vector, v: &Vector, w: &Vector) -> Vector {
    let s = x[1];
    Vector::from_vec(vec![
        -(v[0] * w[1] + v[1] * w[0]) / s,
        v[0] * w[0] / (2.0 * s) - v[1] * w[1] / s,
    ])
}

/// Inverse metric applied to a covector: `F⁻¹ df = (σ² df_μ, σ²/2 df_σ)`.
pub(crate) fn raise(x: &Vector, df: &Vector) -> Vector {
    let s2 = x[1] * x[1];
    Vector::from_vec(vec![s2 * df[0], 0.5 * s2 * df[1]])
}

/// `d/dt F⁻¹(x + t v) df(x + t v)` given `d2f_v = D²f(x) v`.
pub(crate) fn raise_derivative(x: &Vector, v: &Vector, df: &Vector, d2f_v: &Vector) -> Vector {
    let s = x[1];
    let s2 = s * s;
    Vector::from_vec(vec![
        2.0 * s * v[1] * df[0] + s2 * d2f_v[0],
        s * v[1] * df[1] + 0.5 * s2 * d2f_v[1],
    ])
}

/// Geodesic distance. The substitution `μ = √2 u` maps the metric to twice the
/// Poincaré half-plane metric in `(u, σ)`.
pub(crate) fn distance(x: &Vector, y: &Vector) -> f64 {
    let du2 = 0.5 * (x[0] - y[0]).powi(2);
    let ds2 = (x[1] - y[1]).powi(2);
    let delta = (du2 + ds2) / (2.0 * x[1] * y[1]);
    // arccosh(1 + δ) = 2 asinh(√(δ/2)), stable for small δ.
    std::f64::consts::SQRT_2 * 2.0 * (0.5 * delta).sqrt().asinh()
}

const ODE_ARC_STEP: f64 = 1e-3;

/// Geodesic equation with a parallel field `w` carried along.
fn geodesic_rhs(state: &[f64; 6]) -> [f64; 6] {
    let [_, s, dm, ds, wm, ws] = *state;
    [
        dm,
        ds,
        2.0 * dm * ds / s,
        -dm * dm / (2.0 * s) + ds * ds / s,
        (dm * ws + ds * wm) / s,
        -dm * wm / (2.0 * s) + ds * ws / s,
    ]
}

/// RK4 on the chart geodesic equation, returning `exp_x(v)` and the parallel
/// transport of `w`.
fn geodesic(x: &Vector, v: &Vector, w: &Vector) -> (Vector, Vector) {
    let (g11, g22) = metric_diag(x);
    let speed = (g11 * v[0] * v[0] + g22 * v[1] * v[1]).sqrt();
    if speed == 0.0 {
        return (x.clone(), w.clone());
    }
    let steps = ((speed / ODE_ARC_STEP).ceil() as usize).max(8);
    let h = 1.0 / steps as f64;
    let mut y = [x[0], x[1], v[0], v[1], w[0], w[1]];
    let axpy = |a: &[f64; 6], k: &[f64; 6], c: f64| -> [f64; 6] { std::array::from_fn(|i| a[i] + c * k[i]) };
    for _ in 0..steps {
        let k1 = geodesic_rhs(&y);
        let k2 = geodesic_rhs(&axpy(&y, &k1, 0.5 * h));
        let k3 = geodesic_rhs(&axpy(&y, &k2, 0.5 * h));
        let k4 = geodesic_rhs(&axpy(&y, &k3, h));
        for i in 0..6 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (Vector::from_vec(vec![y[0], y[1]]), Vector::from_vec(vec![y[4], y[5]]))
}

/// Exponential map.
pub(crate) fn exp(x: &Vector, v: &Vector) -> Vector {
    geodesic(x, v, &Vector::zeros(2)).0
}

/// Parallel transport of `w` along `t ↦ exp_x(t v)`.
pub(crate) fn transport(x: &Vector, v: &Vector, w: &Vector) -> Vector {
    geodesic(x, v, w).1
}

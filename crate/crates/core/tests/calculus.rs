use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rsmf_core::calculus::{
    generator_apply, hessian_form, hessian_form_fd, lie_apply, one_step_rsgd_expansion, one_step_rsmf_expansion,
    OperatorStack, TestFunction, HESSIAN_FD_STEP,
};
use rsmf_core::flows::RsmfCoefficients;
use rsmf_core::geometry::sampling::{random_point, random_unit_tangent};
use rsmf_core::geometry::{Vector, VectorField};
use rsmf_core::problems::{default_problem, ProblemName};
use rsmf_core::rng::stream;
use rsmf_core::Manifold;

/// `½ xᵀ S x + cᵀ x` with a fixed symmetric `S`.
fn quadratic(n: usize) -> TestFunction {
    let s = DMatrix::from_fn(n, n, |i, j| (((i + 1) * (j + 2) + (j + 1) * (i + 2)) % 7) as f64 / 7.0 - 0.4);
    let c = Vector::from_fn(n, |i, _| 0.3 - 0.1 * i as f64);
    let (s1, s2, c1) = (s.clone(), s.clone(), c.clone());
    TestFunction::new("quadratic", move |x: &Vector| 0.5 * x.dot(&(&s * x)) + c.dot(x))
        .with_gradient(move |x: &Vector| &s1 * x + &c1)
        .with_hvp(move |_x: &Vector, v: &Vector| &s2 * v)
}

fn manifolds() -> Vec<Manifold> {
    ProblemName::ALL
        .iter()
        .map(|n| default_problem(*n).objective.manifold())
        .collect()
}

#[test]
fn hessian_is_symmetric_and_matches_polarization() {
    let mut rng = stream(21, 0);
    for m in manifolds() {
        let g = quadratic(m.ambient_dim());
        for _ in 0..200 {
            let x = random_point(m, &mut rng);
            let v = random_unit_tangent(&x, &mut rng);
            let w = random_unit_tangent(&x, &mut rng);
            let (xc, vc, wc) = (x.coords(), v.coords(), w.coords());
            let hvw = hessian_form(m, &g, xc, vc, wc).unwrap();
            let hwv = hessian_form(m, &g, xc, wc, vc).unwrap();
            assert!((hvw - hwv).abs() <= 1e-8 * (1.0 + hvw.abs()), "{m}: {hvw} vs {hwv}");
            let fd = hessian_form_fd(m, &g, xc, vc, wc, HESSIAN_FD_STEP);
            assert!((hvw - fd).abs() <= 1e-5 * (1.0 + hvw.abs()), "{m}: {hvw} vs fd {fd}");
        }
    }
}

#[test]
fn generator_without_noise_is_the_drift_derivative() {
    let mut rng = stream(22, 0);
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let m = p.objective.manifold();
        let coeffs = RsmfCoefficients::new(p.objective.clone(), 0.1).unwrap();
        let drift: Arc<dyn VectorField> = Arc::new(coeffs.drift_field());
        let stack = OperatorStack::new(m, drift.clone(), Vec::new(), Vec::new(), 0.1).unwrap();
        for _ in 0..20 {
            let x = random_point(m, &mut rng);
            let lg = generator_apply(&stack, &p.test_function, x.coords()).unwrap();
            let bg = lie_apply(m, drift.as_ref(), &p.test_function, x.coords()).unwrap();
            assert_eq!(lg, bg, "{name}");
        }
    }
}

#[test]
fn rsmf_and_rsgd_expansions_agree_to_second_order() {
    let etas = [0.1, 0.05, 0.025, 0.0125];
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let m = p.objective.manifold();
        let g = quadratic(m.ambient_dim());
        let diffs: Vec<f64> = etas
            .iter()
            .map(|&eta| {
                let stack = RsmfCoefficients::new(p.objective.clone(), eta).unwrap().operator_stack().unwrap();
                let a = one_step_rsmf_expansion(&stack, &g, &p.x0).unwrap();
                let b = one_step_rsgd_expansion(&p.objective, &g, &p.x0, eta).unwrap();
                (a - b).abs()
            })
            .collect();
        for k in 1..etas.len() {
            let slope = (diffs[k - 1] / diffs[k]).ln() / (etas[k - 1] / etas[k]).ln();
            assert!(slope >= 2.7, "{name}: slope {slope} from {diffs:?}");
        }
    }
}

/// Probabilists' Gauss–Hermite rule by Golub–Welsch.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect()
}

/// `E g(exp_x(b δ + √δ Σ σᵢ ξᵢ))` by tensor Gauss–Hermite quadrature.
fn one_em_step(coeffs: &RsmfCoefficients, g: &TestFunction, x: &Vector, delta: f64, nodes: usize) -> f64 {
    let m = coeffs.objective().manifold();
    let b = coeffs.ito_drift_at(x).unwrap();
    let sig = coeffs.diffusion_at(x);
    let rule = gauss_hermite(nodes);
    let total = rule.len().pow(sig.len() as u32);
    let mut sum = 0.0;
    for mut idx in 0..total {
        let mut step = &b * delta;
        let mut weight = 1.0;
        for s in &sig {
            let (z, w) = rule[idx % nodes];
            idx /= nodes;
            step.axpy(z * delta.sqrt(), s, 1.0);
            weight *= w;
        }
        sum += weight * g.eval(&m.exp_at(x, &step));
    }
    sum
}

#[test]
fn generator_is_the_small_step_limit_of_euler_maruyama() {
    let deltas = [1e-2, 5e-3, 2.5e-3];
    for (name, nodes) in [(ProblemName::CircleTestbed, 5), (ProblemName::SphereRayleigh, 3)] {
        let p = default_problem(name);
        let coeffs = RsmfCoefficients::new(p.objective.clone(), 0.1).unwrap();
        let stack = coeffs.operator_stack().unwrap();
        let g = quadratic(p.objective.manifold().ambient_dim());
        let lg = generator_apply(&stack, &g, &p.x0).unwrap();
        let errs: Vec<f64> = deltas
            .iter()
            .map(|&d| ((one_em_step(&coeffs, &g, &p.x0, d, nodes) - g.eval(&p.x0)) / d - lg).abs())
            .collect();
        for k in 1..deltas.len() {
            let order = (errs[k - 1] / errs[k]).log2();
            assert!(order >= 0.9, "{name}: order {order} from {errs:?}");
        }
    }
}

use rsmf_core::flows::{gradient_flow_trajectory, rsmf_path, IntegratorConfig, RsmfCoefficients};
use rsmf_core::geometry::sampling::random_point;
use rsmf_core::geometry::JacobianMode;
use rsmf_core::problems::{default_problem, ProblemName};
use rsmf_core::rng::stream;

#[test]
fn drift_cancellation_with_finite_difference_jacobians() {
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let coeffs = RsmfCoefficients::new(p.objective.clone(), 0.1)
            .unwrap()
            .with_mode(JacobianMode::FiniteDifference);
        let mut rng = stream(51, 0);
        for _ in 0..100 {
            let x = random_point(p.objective.manifold(), &mut rng);
            let scale = 1.0 + p.objective.grad_at(x.coords()).norm();
            let r = coeffs.cancellation_residual(x.coords()).unwrap();
            assert!(r <= 1e-5 * scale, "{name}: {r}");
        }
    }
}

#[test]
fn flow_iterates_stay_on_the_manifold() {
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let m = p.objective.manifold();
        let coeffs = RsmfCoefficients::new(p.objective.clone(), 0.05).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 52);
        let mut worst = 0.0f64;
        for path in 0..4 {
            rsmf_path(&coeffs, &p.x0, 1.0, &cfg, path, |_, x| worst = worst.max(m.residual(x))).unwrap();
        }
        gradient_flow_trajectory(&p.objective, &p.x0, 1.0, &cfg, |_, x| worst = worst.max(m.residual(x))).unwrap();
        assert!(worst <= 1e-9, "{name}: {worst}");
    }
}

use rsmf_core::flows::{rsmf_mc_expectation, IntegratorConfig, RsmfCoefficients};
use rsmf_core::kolmogorov::{circle_generator, solve_backward};
use rsmf_core::problems::{default_problem, ProblemName};

#[test]
fn backward_equation_converges_at_fourth_order() {
    let p = default_problem(ProblemName::CircleTestbed);
    let gen = circle_generator(&p.objective, 0.1).unwrap();
    let th0 = p.x0[1].atan2(p.x0[0]);
    let u: Vec<f64> = [512, 1024, 2048]
        .iter()
        .map(|n| solve_backward(&gen, &p.test_function, 0.5, th0, *n).unwrap())
        .collect();
    let order = ((u[0] - u[1]).abs() / (u[1] - u[2]).abs()).log2();
    assert!(order >= 3.8, "{order}");
}

#[test]
fn backward_equation_agrees_with_sde_monte_carlo() {
    let p = default_problem(ProblemName::CircleTestbed);
    let (eta, t) = (0.1, 0.5);
    let gen = circle_generator(&p.objective, eta).unwrap();
    let th0 = p.x0[1].atan2(p.x0[0]);
    let pde = solve_backward(&gen, &p.test_function, t, th0, 2048).unwrap();
    let coeffs = RsmfCoefficients::new(p.objective.clone(), eta).unwrap();
    let mc = rsmf_mc_expectation(&coeffs, &p.test_function, &p.x0, t, &IntegratorConfig::new(1e-3, 53), 10_000).unwrap();
    assert!((pde - mc.mean).abs() <= 4.0 * mc.std_error, "{pde} vs {mc:?}");
}

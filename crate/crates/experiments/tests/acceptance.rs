//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::process::Command;
use std::time::Instant;

use rsmf_core::flows::{rsmf_mc_expectation, IntegratorConfig, RsmfCoefficients};
use rsmf_core::geometry::sampling::random_point;
use rsmf_core::geometry::JacobianMode;
use rsmf_core::kolmogorov::{circle_generator, solve_backward};
use rsmf_core::problems::{default_problem, ProblemName, ProblemSpec};
use rsmf_core::rng;
use rsmf_core::rsgd::{rsgd_exact_expectation, rsgd_mc_expectation, RsgdConfig, DEFAULT_ENUMERATION_BUDGET};
use rsmf_experiments::cli::check_curve;
use rsmf_experiments::config::RateExperiment;
use rsmf_experiments::harness::{circle_angle, run_rate_experiment, ErrorCurve};
use rsmf_experiments::invariants::run_invariants;
use rsmf_experiments::pca::pca_demo;
use rsmf_experiments::retraction_order::run_standard;

const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn load(name: &str) -> RateExperiment {
    let text = std::fs::read_to_string(format!("{CONFIGS}/{name}.json")).expect("config file");
    RateExperiment::from_json(&text).expect("valid config")
}

/// Runs a config and checks it against its own window.
fn windowed(name: &str) -> (bool, String, ErrorCurve) {
    let exp = load(name);
    let curve = run_rate_experiment(&exp).expect("experiment runs");
    let verdict = check_curve(&curve, &exp.window.expect("window"));
    let fit = curve.fit;
    let text = match (&verdict, fit) {
        (Ok(()), Some(f)) => format!("{name}: slope {:.3}, residual {:.3}", f.slope, f.residual),
        (Err(e), _) => format!("{name}: {e}"),
        (Ok(()), None) => unreachable!("a window check needs a fit"),
    };
    (verdict.is_ok(), text, curve)
}

fn rsmf_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_rsmf"))
        .args(args)
        .output()
        .expect("rsmf binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn order_one() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["sphere_order1", "circle_order1", "circle_order1_exact"] {
        let (pass, text, _) = windowed(name);
        ok &= pass;
        parts.push(text);
    }
    outcome(ok, parts.join("; "))
}

fn order_two() -> Outcome {
    let (pass, text, _) = windowed("circle_order2");
    let config = format!("{CONFIGS}/circle_order2.json");
    let code = rsmf_cli(&["rates", "--config", &config, "--assert", "--out", &tmp("circle_order2.csv")]);
    outcome(pass && code == 0, format!("{text}; `rates --assert` exit {code}"))
}

fn one_step() -> Outcome {
    let (a, ta, _) = windowed("circle_onestep");
    let (b, tb, _) = windowed("circle_onestep_pde");
    outcome(a && b, format!("{ta}; {tb}"))
}

fn retraction_orders() -> Outcome {
    let reports = run_standard(100, 4).expect("retraction suite runs");
    let ok = reports.iter().all(|r| r.passed());
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{} {} {:.3} (≥ {})",
                r.manifold,
                r.scheme.name(),
                r.min_pair_slope.unwrap_or(f64::INFINITY),
                r.required_slope()
            )
        })
        .collect();
    outcome(ok, parts.join(", "))
}

fn drift_cancellation() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (k, name) in [ProblemName::CircleTestbed, ProblemName::SphereRayleigh, ProblemName::PcaStiefel]
        .into_iter()
        .enumerate()
    {
        let p = default_problem(name);
        let coeffs = RsmfCoefficients::new(p.objective.clone(), 0.1)
            .expect("coefficients")
            .with_mode(JacobianMode::Analytic);
        let mut rng = rng::stream(5, k as u64);
        let mut local = 0.0f64;
        for _ in 0..1000 {
            let x = random_point(p.objective.manifold(), &mut rng);
            local = local.max(coeffs.cancellation_residual(x.coords()).expect("analytic Jacobians"));
        }
        worst = worst.max(local);
        parts.push(format!("{name} {local:.2e}"));
    }
    outcome(worst <= 1e-8, format!("max residual {}", parts.join(", ")))
}

fn oracle_agreement() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    for name in [ProblemName::CircleTestbed, ProblemName::SphereRayleigh] {
        let p = default_problem(name);
        let cfg = RsgdConfig::new(0.1, 5, p.retraction, 6);
        let exact = rsgd_exact_expectation(&p.objective, &p.test_function, &p.x0, &cfg, DEFAULT_ENUMERATION_BUDGET)
            .expect("enumeration");
        let mc = rsgd_mc_expectation(&p.objective, &p.test_function, &p.x0, &cfg, 100_000).expect("mc");
        let z = (exact - mc.mean).abs() / mc.std_error;
        ok &= z <= 4.0;
        parts.push(format!("{name} enum vs MC {z:.2} SE"));
    }

    let p = default_problem(ProblemName::CircleTestbed);
    let (eta, t) = (0.1, 0.5);
    let gen = circle_generator(&p.objective, eta).expect("circle generator");
    let th0 = circle_angle(&p.x0);
    let pde = solve_backward(&gen, &p.test_function, t, th0, 2048).expect("pde");
    let coeffs = RsmfCoefficients::new(p.objective.clone(), eta).expect("coefficients");
    let mc = rsmf_mc_expectation(&coeffs, &p.test_function, &p.x0, t, &IntegratorConfig::new(1e-3, 7), 100_000)
        .expect("sde mc");
    let z = (pde - mc.mean).abs() / mc.std_error;
    ok &= z <= 4.0;
    parts.push(format!("PDE vs SDE MC {z:.2} SE"));

    let u: Vec<f64> = [512, 1024, 2048]
        .iter()
        .map(|n| solve_backward(&gen, &p.test_function, t, th0, *n).expect("pde"))
        .collect();
    let order = ((u[0] - u[1]).abs() / (u[1] - u[2]).abs()).log2();
    ok &= order >= 3.8;
    parts.push(format!("grid order {order:.2}"));
    outcome(ok, parts.join(", "))
}

fn invariant_suite() -> Outcome {
    let checks = run_invariants(1000, 8).expect("invariant suite runs");
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} {} {:.2e}", c.manifold, c.check, c.max_residual))
        .collect();
    let code = rsmf_cli(&["invariants", "--out", &tmp("invariants.csv")]);
    let detail = if failed.is_empty() {
        format!("{} checks on 6 manifolds; `invariants` exit {code}", checks.len())
    } else {
        format!("failed: {}; `invariants` exit {code}", failed.join(", "))
    };
    outcome(failed.is_empty() && code == 0, detail)
}

fn pca() -> Outcome {
    let r = pca_demo(&ProblemSpec::new(ProblemName::PcaStiefel), 0.01, 10_000, 9, 1e-3, 100).expect("pca runs");
    outcome(
        r.passed(),
        format!(
            "gap ≤ 1e-3 first at step {}, final gap {:.2e}, |grad| at eigenframe {:.2e}",
            r.first_hit.map_or("never".into(), |k| k.to_string()),
            r.final_gap,
            r.grad_norm_at_optimum
        ),
    )
}

fn tmp(name: &str) -> String {
    let dir = std::env::temp_dir().join("rsmf-acceptance");
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir.join(name).to_string_lossy().into_owned()
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("order-1 weak error", order_one),
        ("order-2 weak error", order_two),
        ("one-step third-order expansion", one_step),
        ("retraction order", retraction_orders),
        ("drift cancellation", drift_cancellation),
        ("oracle cross-agreement", oracle_agreement),
        ("geometry invariant suite", invariant_suite),
        ("PCA demo", pca),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {} {}: {} [{:.1}s] {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

//! Weak-error curves and log-log rate fits.

use serde::{Deserialize, Serialize};

use rsmf_core::calculus::one_step_rsmf_expansion;
use rsmf_core::flows::{default_substep, gradient_flow, rsmf_mc_expectation, IntegratorConfig, RsmfCoefficients};
use rsmf_core::geometry::Vector;
use rsmf_core::kolmogorov::{circle_generator, solve_backward};
use rsmf_core::problems::Problem;
use rsmf_core::rng::mix64;
use rsmf_core::rsgd::{rsgd_exact_expectation, rsgd_mc_expectation, RsgdConfig};
use rsmf_core::{Error, ManifoldKind};

use crate::config::{steps_for, Comparison, OneStepTarget, Oracle, RateExperiment};
use crate::error::Result;
use crate::retraction_order::retraction_order;

/// Points whose error is below this multiple of their uncertainty are
/// excluded from the fit.
pub const SIGNAL_TO_NOISE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute deviation of `ln error` from the fitted line.
    pub residual: f64,
}

/// Ordinary least squares of `ln error` on `ln η`.
pub fn fit_rate(points: &[(f64, f64)]) -> rsmf_core::Result<RateFit> {
    let valid: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, err)| *e > 0.0 && *err > 0.0 && err.is_finite())
        .map(|(e, err)| (e.ln(), err.ln()))
        .collect();
    if valid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable points, a rate fit needs at least 3",
            valid.len()
        )));
    }
    let n = valid.len() as f64;
    let mx = valid.iter().map(|p| p.0).sum::<f64>() / n;
    let my = valid.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = valid.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all step sizes coincide".into()));
    }
    let sxy: f64 = valid.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = valid
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eta: f64,
    pub n_steps: usize,
    pub rsgd_expectation: f64,
    pub reference_value: f64,
    pub abs_error: f64,
    pub error_bar: f64,
    pub included_in_fit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub problem: String,
    pub comparison: Comparison,
    pub oracle: Oracle,
    pub config_hash: String,
    pub points: Vec<CurvePoint>,
    pub fit: Option<RateFit>,
    /// Smallest per-pair slope, for retraction-order curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_pair_slope: Option<f64>,
    pub warnings: Vec<String>,
}

impl ErrorCurve {
    pub fn fit_or_err(&self) -> rsmf_core::Result<RateFit> {
        self.fit.ok_or_else(|| Error::InsufficientData(self.warnings.join("; ")))
    }
}

/// A value with an uncertainty estimate.
#[derive(Clone, Copy, Debug)]
struct Estimate {
    value: f64,
    uncertainty: f64,
}

fn exact(value: f64) -> Estimate {
    Estimate { value, uncertainty: 0.0 }
}

struct Runner<'a> {
    exp: &'a RateExperiment,
    problem: Problem,
}

impl Runner<'_> {
    fn rsgd(&self, eta: f64, n: usize, seed: u64) -> Result<Estimate> {
        let p = &self.problem;
        let cfg = RsgdConfig::new(eta, n, p.retraction, seed);
        match self.exp.oracle {
            Oracle::ExactEnum => Ok(exact(rsgd_exact_expectation(
                &p.objective,
                &p.test_function,
                &p.x0,
                &cfg,
                self.exp.enumeration_budget,
            )?)),
            Oracle::MonteCarlo => {
                let e = rsgd_mc_expectation(&p.objective, &p.test_function, &p.x0, &cfg, self.exp.n_paths)?;
                Ok(Estimate {
                    value: e.mean,
                    uncertainty: e.std_error,
                })
            }
            Oracle::Pde => unreachable!("validated"),
        }
    }

    fn flow(&self, t: f64, seed: u64) -> Result<Estimate> {
        let p = &self.problem;
        let run = |h: f64| -> Result<f64> {
            let cfg = IntegratorConfig::new(h, seed).with_ode_scheme(self.exp.ode_scheme);
            Ok(p.test_function.eval(&gradient_flow(&p.objective, &p.x0, t, &cfg)?))
        };
        let fine = run(self.exp.ode_step)?;
        let coarse = run(2.0 * self.exp.ode_step)?;
        Ok(Estimate {
            value: fine,
            uncertainty: (fine - coarse).abs() / 15.0,
        })
    }

    fn rsmf(&self, oracle: Oracle, eta: f64, t: f64, seed: u64) -> Result<Estimate> {
        let p = &self.problem;
        match oracle {
            Oracle::Pde => {
                let gen = circle_generator(&p.objective, eta)?;
                let th0 = circle_angle(&p.x0);
                let grid = self.exp.pde_grid;
                let fine = solve_backward(&gen, &p.test_function, t, th0, grid)?;
                let coarse = solve_backward(&gen, &p.test_function, t, th0, (grid / 2).max(256))?;
                Ok(Estimate {
                    value: fine,
                    uncertainty: if grid > 256 { (fine - coarse).abs() / 15.0 } else { 0.0 },
                })
            }
            Oracle::MonteCarlo => {
                let coeffs = RsmfCoefficients::new(p.objective.clone(), eta)?;
                let cfg = IntegratorConfig::new(fitted_substep(t, self.exp.substep.unwrap_or(default_substep(eta))), seed);
                let e = rsmf_mc_expectation(&coeffs, &p.test_function, &p.x0, t, &cfg, self.exp.n_paths)?;
                Ok(Estimate {
                    value: e.mean,
                    uncertainty: e.std_error,
                })
            }
            Oracle::ExactEnum => unreachable!("validated"),
        }
    }

    fn reference_oracle(&self) -> Oracle {
        self.exp.reference_oracle.unwrap_or(match self.problem.objective.manifold().kind() {
            ManifoldKind::Circle => Oracle::Pde,
            _ => Oracle::MonteCarlo,
        })
    }

    fn expansion(&self, eta: f64) -> Result<f64> {
        let p = &self.problem;
        let coeffs = RsmfCoefficients::new(p.objective.clone(), eta)?;
        Ok(one_step_rsmf_expansion(&coeffs.operator_stack()?, &p.test_function, &p.x0)?)
    }

    /// `(n, discrete side, reference)` at one η.
    fn point(&self, i: usize, eta: f64) -> Result<(usize, Estimate, Estimate)> {
        let seed = mix64(self.exp.seed ^ mix64(i as u64));
        let ref_seed = mix64(seed);
        match self.exp.comparison {
            Comparison::OdeVsRsgd => {
                let n = steps_for(self.exp.horizon, eta);
                Ok((n, self.rsgd(eta, n, seed)?, self.flow(n as f64 * eta, ref_seed)?))
            }
            Comparison::RsmfVsRsgd => {
                let n = steps_for(self.exp.horizon, eta);
                let t = n as f64 * eta;
                Ok((n, self.rsgd(eta, n, seed)?, self.rsmf(self.reference_oracle(), eta, t, ref_seed)?))
            }
            Comparison::OneStepRsmf => {
                let value = match self.exp.one_step_target {
                    OneStepTarget::Rsgd => self.rsgd(eta, 1, seed)?,
                    OneStepTarget::Rsmf => self.rsmf(self.exp.oracle, eta, eta, seed)?,
                };
                Ok((1, value, exact(self.expansion(eta)?)))
            }
            Comparison::OneStepOde => Ok((1, self.rsgd(eta, 1, seed)?, self.flow(eta, ref_seed)?)),
            Comparison::RetractionOrder => unreachable!("handled separately"),
        }
    }
}

/// Largest substep not exceeding `target` that divides `t` evenly.
pub fn fitted_substep(t: f64, target: f64) -> f64 {
    let k = (t / target - 1e-9).ceil().max(1.0);
    t / k
}

/// Runs every η point of the experiment and fits the rate.
pub fn run_rate_experiment(exp: &RateExperiment) -> Result<ErrorCurve> {
    exp.validate()?;
    let problem = exp.build_problem()?;
    let mut curve = ErrorCurve {
        problem: problem.spec.problem.to_string(),
        comparison: exp.comparison,
        oracle: exp.oracle,
        config_hash: exp.hash(),
        points: Vec::new(),
        fit: None,
        min_pair_slope: None,
        warnings: Vec::new(),
    };
    if exp.comparison == Comparison::RetractionOrder {
        let report = retraction_order(problem.objective.manifold(), problem.retraction, &exp.eta_grid, exp.pairs, exp.seed)?;
        for (t, d) in exp.eta_grid.iter().zip(&report.max_distance) {
            curve.points.push(CurvePoint {
                eta: *t,
                n_steps: 1,
                rsgd_expectation: *d,
                reference_value: 0.0,
                abs_error: *d,
                error_bar: 0.0,
                included_in_fit: *d > 0.0,
            });
        }
        curve.min_pair_slope = report.min_pair_slope;
        curve.warnings.extend(report.warnings);
    } else {
        let runner = Runner { exp, problem };
        for (i, eta) in exp.eta_grid.iter().enumerate() {
            let (n, value, reference) = runner.point(i, *eta)?;
            let abs_error = (value.value - reference.value).abs();
            let error_bar = value.uncertainty.hypot(reference.uncertainty);
            let included = abs_error > 0.0 && abs_error >= SIGNAL_TO_NOISE * error_bar;
            if !included {
                curve.warnings.push(format!(
                    "η = {eta}: error {abs_error:.3e} is below {SIGNAL_TO_NOISE}× its uncertainty {error_bar:.3e}; excluded from the fit"
                ));
            }
            curve.points.push(CurvePoint {
                eta: *eta,
                n_steps: n,
                rsgd_expectation: value.value,
                reference_value: reference.value,
                abs_error,
                error_bar,
                included_in_fit: included,
            });
        }
    }
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.included_in_fit)
        .map(|p| (p.eta, p.abs_error))
        .collect();
    match fit_rate(&pts) {
        Ok(f) => curve.fit = Some(f),
        Err(e) => curve.warnings.push(e.to_string()),
    }
    Ok(curve)
}

/// `θ` of a point on the circle.
pub fn circle_angle(x: &Vector) -> f64 {
    x[1].atan2(x[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProblemRef;
    use rand::Rng;
    use rsmf_core::problems::ProblemName;

    #[test]
    fn exact_power_laws() {
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|e| (*e, 3.0 * e * e)).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.residual <= 1e-12);
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|e| (*e, *e)).collect();
        assert!((fit_rate(&pts).unwrap().slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = rsmf_core::rng::stream(8, 0);
        for _ in 0..200 {
            let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025]
                .iter()
                .map(|e| (*e, 0.7 * e * e * (1.0 + rng.random_range(-0.05..0.05))))
                .collect();
            assert!((fit_rate(&pts).unwrap().slope - 2.0).abs() <= 0.1);
        }
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(fit_rate(&[(0.1, 0.1), (0.05, 0.05)]), Err(Error::InsufficientData(_))));
        assert!(matches!(
            fit_rate(&[(0.1, 0.1), (0.05, 0.0), (0.02, 0.02)]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn substeps_divide_the_horizon() {
        assert_eq!(fitted_substep(0.5, 1e-3), 0.5 / 500.0);
        let d = fitted_substep(0.4, 0.3);
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_ode_comparison_is_first_order() {
        // Deterministic circle: RSGD is geodesic Euler on the gradient flow.
        let spec = rsmf_core::problems::ProblemSpec::new(ProblemName::CircleTestbed)
            .with("c0", 0.0)
            .with("c1", 0.0);
        let mut exp = RateExperiment::new(
            ProblemRef::Spec(spec),
            Comparison::OdeVsRsgd,
            Oracle::ExactEnum,
            vec![0.1, 0.05, 0.025, 0.0125],
            0.5,
            1,
        );
        exp.enumeration_budget = 1 << 41;
        // With no noise every atom gives the same step, but enumeration
        // still branches; restrict to the feasible part of the grid.
        exp.eta_grid = vec![0.1, 0.05, 0.025];
        let curve = run_rate_experiment(&exp).unwrap();
        let fit = curve.fit.unwrap();
        assert!((fit.slope - 1.0).abs() < 0.1, "{fit:?}");
    }
}

//! The `rsmf` command-line tool.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use rsmf_core::flows::{default_substep, rsmf_mc_expectation, rsmf_path, IntegratorConfig, RsmfCoefficients};
use rsmf_core::kolmogorov::{circle_generator, solve_backward};
use rsmf_core::problems::{catalog, make_problem, Problem, ProblemName, ProblemSpec};
use rsmf_core::rsgd::{rsgd_path, RsgdConfig};
use rsmf_core::RetractionScheme;

use crate::config::{Comparison, OneStepTarget, Oracle, ProblemRef, RateExperiment, TestFunctionId, Window};
use crate::error::{ExperimentError, Result};
use crate::harness::{circle_angle, fitted_substep, run_rate_experiment, ErrorCurve};
use crate::invariants::run_invariants;
use crate::output::{Format, Report, Table};
use crate::pca::pca_demo;
use crate::retraction_order::run_standard;

#[derive(Debug, Parser)]
#[command(name = "rsmf", version, about = "Weak-error experiments for Riemannian SGD and its modified flows")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long, default_value = "circle_testbed")]
    pub problem: String,
    /// Problem parameter `key=value`; values are parsed as JSON when possible.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

impl ProblemArgs {
    fn spec(&self) -> Result<ProblemSpec> {
        let name: ProblemName = self.problem.parse()?;
        let mut spec = ProblemSpec::new(name);
        for p in &self.params {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("parameter '{p}' is not KEY=VALUE")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            spec = spec.with(k, value);
        }
        Ok(spec)
    }

    fn build(&self) -> Result<Problem> {
        Ok(make_problem(&self.spec()?)?)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OracleArg {
    ExactEnum,
    MonteCarlo,
    Pde,
}

impl From<OracleArg> for Oracle {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::ExactEnum => Oracle::ExactEnum,
            OracleArg::MonteCarlo => Oracle::MonteCarlo,
            OracleArg::Pde => Oracle::Pde,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetArg {
    Rsgd,
    Rsmf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a rate experiment from a JSON config.
    Rates {
        #[arg(long)]
        config: PathBuf,
        /// Exit 1 when the fitted rate leaves the config's window.
        #[arg(long)]
        assert: bool,
    },
    /// One-step error against the second-order expansion of the modified flow.
    Onestep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
        etas: Vec<f64>,
        #[arg(long, value_enum, default_value = "exact-enum")]
        oracle: OracleArg,
        #[arg(long, value_enum, default_value = "rsgd")]
        target: TargetArg,
        #[arg(long, default_value = "default")]
        g: String,
        #[arg(long, default_value_t = 2.7)]
        min_slope: f64,
        #[arg(long)]
        assert: bool,
    },
    /// Distance-to-exponential slopes of every retraction.
    RetractionOrder {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long)]
        assert: bool,
    },
    /// Geometry and noise invariant suite; exits 1 on any failure.
    Invariants {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// One RSGD path: step, coordinates, objective.
    RsgdRun {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        retraction: Option<String>,
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
    /// One modified-flow path: time, coordinates, objective.
    RsmfRun {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        substep: Option<f64>,
        #[arg(long, default_value_t = 0)]
        path: u64,
        /// Report every k-th substep.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// Monte Carlo expectation of a test function under the modified flow.
    RsmfExpect {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
        #[arg(long)]
        substep: Option<f64>,
        #[arg(long, default_value = "default")]
        g: String,
    },
    /// Backward Kolmogorov expectation on the circle testbed.
    PdeSolve {
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        eta: f64,
        #[arg(long = "T")]
        horizon: f64,
        /// Start angle; the problem's `theta0` when absent.
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        #[arg(long, default_value = "default")]
        g: String,
    },
    /// RSGD on Stiefel PCA against the eigenvector frame.
    PcaDemo {
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 100)]
        every: usize,
        #[arg(long)]
        assert: bool,
    },
    /// Problem catalog with parameter defaults.
    ListProblems,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "{}",
                json!({"error": e.kind(), "message": e.to_string(), "exit_code": code})
            );
            code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ExperimentError::Config("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Rates { config, assert } => {
            let text = fs::read_to_string(config)?;
            let exp = RateExperiment::from_json(&text)?;
            let curve = run_rate_experiment(&exp)?;
            curve_report(&curve).emit(cli.format, out)?;
            if *assert {
                let window = exp
                    .window
                    .ok_or_else(|| ExperimentError::Config("--assert needs a window in the config".into()))?;
                check_curve(&curve, &window)?;
            }
            Ok(())
        }
        Command::Onestep {
            problem,
            etas,
            oracle,
            target,
            g,
            min_slope,
            assert,
        } => {
            let mut exp = RateExperiment::new(
                ProblemRef::Spec(problem.spec()?),
                Comparison::OneStepRsmf,
                (*oracle).into(),
                etas.clone(),
                etas.first().copied().unwrap_or(1.0),
                cli.seed,
            );
            exp.one_step_target = match target {
                TargetArg::Rsgd => OneStepTarget::Rsgd,
                TargetArg::Rsmf => OneStepTarget::Rsmf,
            };
            exp.g = g.clone();
            let window = Window {
                min_slope: Some(*min_slope),
                max_slope: None,
                max_residual: None,
            };
            exp.window = Some(window);
            let curve = run_rate_experiment(&exp)?;
            curve_report(&curve).emit(cli.format, out)?;
            if *assert {
                check_curve(&curve, &window)?;
            }
            Ok(())
        }
        Command::RetractionOrder { pairs, assert } => {
            let reports = run_standard(*pairs, cli.seed)?;
            let mut table = Table::new([
                "manifold",
                "scheme",
                "second_order",
                "min_pair_slope",
                "required_slope",
                "passed",
                "max_distance_t0",
                "max_distance_t_last",
            ]);
            for r in &reports {
                table.push([
                    r.manifold.clone(),
                    r.scheme.name().to_string(),
                    r.second_order.to_string(),
                    r.min_pair_slope.map_or("exact".into(), |s| s.to_string()),
                    r.required_slope().to_string(),
                    r.passed().to_string(),
                    r.max_distance[0].to_string(),
                    r.max_distance[r.max_distance.len() - 1].to_string(),
                ]);
            }
            Report::<_, ()> {
                table,
                document: &reports,
                summary: None,
            }
            .emit(cli.format, out)?;
            let failed: Vec<String> = reports
                .iter()
                .filter(|r| !r.passed())
                .map(|r| format!("{} {}", r.manifold, r.scheme.name()))
                .collect();
            if *assert && !failed.is_empty() {
                return Err(ExperimentError::Assertion(format!("retraction order too low: {}", failed.join(", "))));
            }
            Ok(())
        }
        Command::Invariants { samples } => {
            let checks = run_invariants(*samples, cli.seed)?;
            let mut table = Table::new(["manifold", "check", "samples", "max_residual", "tolerance", "passed"]);
            for c in &checks {
                table.push([
                    c.manifold.clone(),
                    c.check.to_string(),
                    c.samples.to_string(),
                    c.max_residual.to_string(),
                    c.tolerance.to_string(),
                    c.passed.to_string(),
                ]);
            }
            Report::<_, ()> {
                table,
                document: &checks,
                summary: None,
            }
            .emit(cli.format, out)?;
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} {}", c.manifold, c.check))
                .collect();
            if !failed.is_empty() {
                return Err(ExperimentError::Assertion(format!("invariants failed: {}", failed.join(", "))));
            }
            Ok(())
        }
        Command::RsgdRun {
            problem,
            eta,
            steps,
            retraction,
            path,
        } => {
            let p = problem.build()?;
            let scheme = match retraction {
                Some(s) => s.parse::<RetractionScheme>()?,
                None => p.retraction,
            };
            let cfg = RsgdConfig::new(*eta, *steps, scheme, cli.seed);
            let obj = &p.objective;
            let mut table = coords_table("step", obj.manifold().ambient_dim());
            let mut rows = Vec::new();
            rsgd_path(obj, &p.x0, &cfg, *path, |k, x| {
                let f = obj.value(x);
                table.push(row(k.to_string(), x.as_slice(), f));
                rows.push(json!({"step": k, "x": x.as_slice(), "f": f}));
            })?;
            Report::<_, ()> {
                table,
                document: rows,
                summary: None,
            }
            .emit(cli.format, out)
        }
        Command::RsmfRun {
            problem,
            eta,
            horizon,
            substep,
            path,
            every,
        } => {
            let p = problem.build()?;
            let coeffs = RsmfCoefficients::new(p.objective.clone(), *eta)?;
            let delta = fitted_substep(*horizon, substep.unwrap_or(default_substep(*eta)));
            let cfg = IntegratorConfig::new(delta, cli.seed);
            let obj = &p.objective;
            let mut table = coords_table("t", obj.manifold().ambient_dim());
            let mut rows = Vec::new();
            let every = (*every).max(1);
            let mut k = 0usize;
            let n = (*horizon / delta).round() as usize;
            rsmf_path(&coeffs, &p.x0, *horizon, &cfg, *path, |t, x| {
                if k.is_multiple_of(every) || k == n {
                    let f = obj.value(x);
                    table.push(row(t.to_string(), x.as_slice(), f));
                    rows.push(json!({"t": t, "x": x.as_slice(), "f": f}));
                }
                k += 1;
            })?;
            Report::<_, ()> {
                table,
                document: rows,
                summary: None,
            }
            .emit(cli.format, out)
        }
        Command::RsmfExpect {
            problem,
            eta,
            horizon,
            paths,
            substep,
            g,
        } => {
            let p = problem.build()?;
            let g = TestFunctionId::parse(g)?.build(&p)?;
            let coeffs = RsmfCoefficients::new(p.objective.clone(), *eta)?;
            let delta = fitted_substep(*horizon, substep.unwrap_or(default_substep(*eta)));
            let cfg = IntegratorConfig::new(delta, cli.seed);
            let e = rsmf_mc_expectation(&coeffs, &g, &p.x0, *horizon, &cfg, *paths)?;
            let doc = json!({
                "problem": p.spec.problem, "eta": eta, "T": horizon, "substep": delta,
                "mean": e.mean, "std_error": e.std_error, "n_paths": e.n_paths,
            });
            let mut table = Table::new(["eta", "T", "substep", "mean", "std_error", "n_paths"]);
            table.push([eta.to_string(), horizon.to_string(), delta.to_string(), e.mean.to_string(), e.std_error.to_string(), e.n_paths.to_string()]);
            Report::<_, ()> {
                table,
                document: doc,
                summary: None,
            }
            .emit(cli.format, out)
        }
        Command::PdeSolve {
            params,
            eta,
            horizon,
            theta0,
            grid,
            g,
        } => {
            let args = ProblemArgs {
                problem: ProblemName::CircleTestbed.to_string(),
                params: params.clone(),
            };
            let p = args.build()?;
            let g = TestFunctionId::parse(g)?.build(&p)?;
            let th0 = theta0.unwrap_or_else(|| circle_angle(&p.x0));
            let gen = circle_generator(&p.objective, *eta)?;
            let value = solve_backward(&gen, &g, *horizon, th0, *grid)?;
            let doc = json!({"eta": eta, "T": horizon, "theta0": th0, "grid": grid, "value": value});
            let mut table = Table::new(["eta", "T", "theta0", "grid", "value"]);
            table.push([eta.to_string(), horizon.to_string(), th0.to_string(), grid.to_string(), value.to_string()]);
            Report::<_, ()> {
                table,
                document: doc,
                summary: None,
            }
            .emit(cli.format, out)
        }
        Command::PcaDemo {
            params,
            eta,
            steps,
            tolerance,
            every,
            assert,
        } => {
            let args = ProblemArgs {
                problem: ProblemName::PcaStiefel.to_string(),
                params: params.clone(),
            };
            let report = pca_demo(&args.spec()?, *eta, *steps, cli.seed, *tolerance, *every)?;
            let mut table = Table::new(["step", "value", "gap"]);
            for t in &report.trace {
                table.push([t.step.to_string(), t.value.to_string(), t.gap.to_string()]);
            }
            let summary = json!({
                "optimum": report.optimum, "final_gap": report.final_gap, "first_hit": report.first_hit,
                "grad_norm_at_optimum": report.grad_norm_at_optimum, "passed": report.passed(),
            });
            Report {
                table,
                document: &report,
                summary: Some(summary),
            }
            .emit(cli.format, out)?;
            if *assert && !report.passed() {
                return Err(ExperimentError::Assertion(format!(
                    "pca gap {:.3e} after {} steps (tolerance {}), gradient at the eigenframe {:.3e}",
                    report.final_gap, report.n_steps, report.tolerance, report.grad_norm_at_optimum
                )));
            }
            Ok(())
        }
        Command::ListProblems => {
            let cat = catalog();
            let mut table = Table::new(["problem", "manifold", "parameter", "default", "description"]);
            for info in &cat {
                for p in &info.params {
                    table.push([info.name.to_string(), info.manifold.to_string(), p.name.to_string(), p.default.to_string(), p.doc.to_string()]);
                }
            }
            Report::<_, ()> {
                table,
                document: &cat,
                summary: None,
            }
            .emit(cli.format, out)
        }
    }
}

fn coords_table(first: &str, n: usize) -> Table {
    let mut headers = vec![first.to_string()];
    headers.extend((0..n).map(|i| format!("x{i}")));
    headers.push("f".into());
    Table::new(headers)
}

fn row(first: String, x: &[f64], f: f64) -> Vec<String> {
    let mut r = vec![first];
    r.extend(x.iter().map(|c| c.to_string()));
    r.push(f.to_string());
    r
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    config_hash: &'a str,
    slope: Option<f64>,
    intercept: Option<f64>,
    residual: Option<f64>,
    min_pair_slope: Option<f64>,
    warnings: &'a [String],
}

fn curve_report(curve: &ErrorCurve) -> Report<&ErrorCurve, CurveSummary<'_>> {
    let mut table = Table::new([
        "eta",
        "n_steps",
        "rsgd_expectation",
        "reference_value",
        "abs_error",
        "error_bar",
        "included_in_fit",
    ]);
    for p in &curve.points {
        table.push([
            p.eta.to_string(),
            p.n_steps.to_string(),
            p.rsgd_expectation.to_string(),
            p.reference_value.to_string(),
            p.abs_error.to_string(),
            p.error_bar.to_string(),
            p.included_in_fit.to_string(),
        ]);
    }
    Report {
        table,
        document: curve,
        summary: Some(CurveSummary {
            config_hash: &curve.config_hash,
            slope: curve.fit.map(|f| f.slope),
            intercept: curve.fit.map(|f| f.intercept),
            residual: curve.fit.map(|f| f.residual),
            min_pair_slope: curve.min_pair_slope,
            warnings: &curve.warnings,
        }),
    }
}

/// Checks a curve's fit (or smallest per-pair slope, for retraction
/// curves) against a window.
pub fn check_curve(curve: &ErrorCurve, window: &Window) -> Result<()> {
    let fit = curve.fit_or_err()?;
    let slope = match curve.comparison {
        Comparison::RetractionOrder => curve.min_pair_slope.unwrap_or(fit.slope),
        _ => fit.slope,
    };
    window.check(slope, fit.residual).map_err(ExperimentError::Assertion)
}

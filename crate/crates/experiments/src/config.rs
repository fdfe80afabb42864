//! Rate-experiment configuration files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "problem": "circle_testbed",
//!   "comparison": "rsmf_vs_rsgd",
//!   "oracle": "exact_enum",
//!   "reference_oracle": "pde",
//!   "eta_grid": [0.2, 0.1, 0.05, 0.025],
//!   "T": 0.5,
//!   "seed": 1,
//!   "window": { "min_slope": 1.7, "max_slope": 2.3 }
//! }
//! ```
//!
//! `problem` is either a catalog name or a full problem spec
//! `{"problem": name, "params": {...}}`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rsmf_core::calculus::TestFunction;
use rsmf_core::flows::OdeScheme;
use rsmf_core::problems::{make_problem, Problem, ProblemName, ProblemSpec};
use rsmf_core::rsgd::DEFAULT_ENUMERATION_BUDGET;
use rsmf_core::RetractionScheme;

use crate::error::{ExperimentError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `E g(Z_n)` against `g` along the gradient flow.
    OdeVsRsgd,
    /// `E g(Z_n)` against `E g(X_{nη})` for the modified flow.
    RsmfVsRsgd,
    /// One step against the second-order Taylor surrogate of the modified flow.
    OneStepRsmf,
    /// One RSGD step against the gradient flow at time `η`.
    OneStepOde,
    /// `d(retr_x(t v), exp_x(t v))` over random unit tangent vectors.
    RetractionOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    ExactEnum,
    MonteCarlo,
    Pde,
}

/// Which process a one-step experiment measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneStepTarget {
    #[default]
    Rsgd,
    Rsmf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Name(ProblemName),
    Spec(ProblemSpec),
}

impl ProblemRef {
    pub fn spec(&self) -> ProblemSpec {
        match self {
            ProblemRef::Name(n) => ProblemSpec::new(*n),
            ProblemRef::Spec(s) => s.clone(),
        }
    }
}

/// Acceptance window checked by `rates --assert`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
}

impl Window {
    pub fn check(&self, slope: f64, residual: f64) -> std::result::Result<(), String> {
        if let Some(lo) = self.min_slope {
            if !(slope >= lo) {
                return Err(format!("slope {slope:.4} below {lo}"));
            }
        }
        if let Some(hi) = self.max_slope {
            if !(slope <= hi) {
                return Err(format!("slope {slope:.4} above {hi}"));
            }
        }
        if let Some(r) = self.max_residual {
            if !(residual <= r) {
                return Err(format!("fit residual {residual:.4} above {r}"));
            }
        }
        Ok(())
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_g() -> String {
    "default".into()
}

fn default_paths() -> u64 {
    100_000
}

fn default_budget() -> u64 {
    DEFAULT_ENUMERATION_BUDGET
}

fn default_grid() -> usize {
    2048
}

fn default_ode_step() -> f64 {
    1e-3
}

fn default_pairs() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateExperiment {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub problem: ProblemRef,
    pub comparison: Comparison,
    /// Oracle for the discrete side.
    pub oracle: Oracle,
    /// Oracle for the modified flow in `rsmf_vs_rsgd`; PDE on the circle and
    /// Monte Carlo elsewhere when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_oracle: Option<Oracle>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub one_step_target: OneStepTarget,
    pub eta_grid: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    /// Test function id: `default` or `coord:<i>`.
    #[serde(default = "default_g")]
    pub g: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retraction: Option<RetractionScheme>,
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_budget")]
    pub enumeration_budget: u64,
    #[serde(default = "default_grid")]
    pub pde_grid: usize,
    /// SDE substep; `min(1e-3, η³)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substep: Option<f64>,
    #[serde(default = "default_ode_step")]
    pub ode_step: f64,
    #[serde(default = "default_ode_scheme")]
    pub ode_scheme: OdeScheme,
    /// Random `(x, v)` pairs for `retraction_order`.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

fn default_ode_scheme() -> OdeScheme {
    OdeScheme::ProjectedRk4
}

fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

impl RateExperiment {
    pub fn new(problem: ProblemRef, comparison: Comparison, oracle: Oracle, eta_grid: Vec<f64>, horizon: f64, seed: u64) -> Self {
        RateExperiment {
            schema: SCHEMA_VERSION,
            problem,
            comparison,
            oracle,
            reference_oracle: None,
            one_step_target: OneStepTarget::Rsgd,
            eta_grid,
            horizon,
            seed,
            g: default_g(),
            x0: None,
            retraction: None,
            n_paths: default_paths(),
            enumeration_budget: default_budget(),
            pde_grid: default_grid(),
            substep: None,
            ode_step: default_ode_step(),
            ode_scheme: default_ode_scheme(),
            pairs: default_pairs(),
            window: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let exp: RateExperiment = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(ExperimentError::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.eta_grid.len() < 3 {
            return Err(rsmf_core::Error::InsufficientData(format!(
                "η grid has {} points, a rate fit needs at least 3",
                self.eta_grid.len()
            ))
            .into());
        }
        if self.eta_grid.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(ExperimentError::Config("η grid entries must be positive".into()));
        }
        if self.eta_grid.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(ExperimentError::Config("η grid must be strictly decreasing".into()));
        }
        if !(self.horizon > 0.0) && self.comparison != Comparison::RetractionOrder {
            return Err(ExperimentError::Config("horizon T must be positive".into()));
        }
        let one_step = matches!(self.comparison, Comparison::OneStepRsmf | Comparison::OneStepOde);
        let horizon_steps = self.eta_grid.iter().all(|e| steps_for(self.horizon, *e) >= 1);
        if !one_step && self.comparison != Comparison::RetractionOrder && !horizon_steps {
            return Err(ExperimentError::Config("every η must fit at least one step into T".into()));
        }
        match (self.comparison, self.oracle) {
            (Comparison::RetractionOrder, _) => {}
            (Comparison::OneStepRsmf, _) if self.one_step_target == OneStepTarget::Rsmf => {
                if self.oracle == Oracle::ExactEnum {
                    return Err(ExperimentError::Config("the modified flow has no enumeration oracle".into()));
                }
            }
            (_, Oracle::Pde) => {
                return Err(ExperimentError::Config("the discrete side needs exact_enum or monte_carlo".into()));
            }
            _ => {}
        }
        if self.reference_oracle == Some(Oracle::ExactEnum) {
            return Err(ExperimentError::Config("the modified flow has no enumeration oracle".into()));
        }
        if self.n_paths < 2 {
            return Err(ExperimentError::Config("n_paths must be at least 2".into()));
        }
        if !(self.ode_step > 0.0) {
            return Err(ExperimentError::Config("ode_step must be positive".into()));
        }
        if self.pairs == 0 {
            return Err(ExperimentError::Config("pairs must be positive".into()));
        }
        TestFunctionId::parse(&self.g)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let mut p = make_problem(&self.problem.spec())?;
        if let Some(x0) = &self.x0 {
            let m = p.objective.manifold();
            let x = rsmf_core::Point::from_slice(m, x0)?;
            p.x0 = x.into_coords();
        }
        if let Some(r) = self.retraction {
            p.retraction = r;
        }
        p.test_function = TestFunctionId::parse(&self.g)?.build(&p)?;
        Ok(p)
    }
}

/// Steps of size `η` that fit into `T`, tolerating rounding in `T/η`.
pub fn steps_for(horizon: f64, eta: f64) -> usize {
    (horizon / eta + 1e-9).floor() as usize
}

/// SHA-256 hex digest of the JSON serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("configs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Test function selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunctionId {
    /// The problem's own default.
    Default,
    /// The `i`-th ambient coordinate.
    Coordinate(usize),
}

impl TestFunctionId {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "default" {
            return Ok(TestFunctionId::Default);
        }
        if let Some(i) = s.strip_prefix("coord:") {
            return i
                .parse()
                .map(TestFunctionId::Coordinate)
                .map_err(|_| ExperimentError::Config(format!("bad coordinate index in '{s}'")));
        }
        Err(ExperimentError::Config(format!("unknown test function '{s}' (use default or coord:<i>)")))
    }

    pub fn build(&self, p: &Problem) -> Result<TestFunction> {
        match self {
            TestFunctionId::Default => Ok(p.test_function.clone()),
            TestFunctionId::Coordinate(i) => {
                let n = p.objective.manifold().ambient_dim();
                if *i >= n {
                    return Err(ExperimentError::Config(format!("coordinate {i} out of range for dimension {n}")));
                }
                Ok(TestFunction::coordinate(*i))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let text = r#"{"problem": "circle_testbed", "comparison": "rsmf_vs_rsgd", "oracle": "exact_enum",
                       "eta_grid": [0.2, 0.1, 0.05], "T": 0.5, "seed": 3}"#;
        let exp = RateExperiment::from_json(text).unwrap();
        assert_eq!(exp.problem, ProblemRef::Name(ProblemName::CircleTestbed));
        assert_eq!(exp.pde_grid, 2048);
        assert_eq!(exp.hash(), RateExperiment::from_json(text).unwrap().hash());
    }

    #[test]
    fn full_problem_spec_is_accepted() {
        let text = r#"{"problem": {"problem": "circle_testbed", "params": {"c1": 0.1}}, "comparison": "ode_vs_rsgd",
                       "oracle": "monte_carlo", "eta_grid": [0.2, 0.1, 0.05], "T": 0.5, "seed": 3, "g": "coord:0"}"#;
        let exp = RateExperiment::from_json(text).unwrap();
        let p = exp.build_problem().unwrap();
        assert_eq!(p.test_function.name(), TestFunction::coordinate(0).name());
    }

    #[test]
    fn rejects_bad_grids_and_keys() {
        let base = |grid: &str| {
            format!(r#"{{"problem": "circle_testbed", "comparison": "ode_vs_rsgd", "oracle": "exact_enum", "eta_grid": {grid}, "T": 0.5, "seed": 1}}"#)
        };
        let two = RateExperiment::from_json(&base("[0.2, 0.1]")).unwrap_err();
        assert!(matches!(two, ExperimentError::Core(rsmf_core::Error::InsufficientData(_))));
        assert_eq!(two.exit_code(), 2);
        assert!(RateExperiment::from_json(&base("[0.1, 0.2, 0.05]")).is_err());
        assert!(RateExperiment::from_json(&base("[0.2, 0.1, 0.0]")).is_err());
        let extra = base("[0.2, 0.1, 0.05]").replace("\"seed\"", "\"sede\": 1, \"seed\"");
        assert!(RateExperiment::from_json(&extra).is_err());
    }

    #[test]
    fn step_counts_tolerate_rounding() {
        assert_eq!(steps_for(0.5, 0.1), 5);
        assert_eq!(steps_for(0.5, 0.2), 2);
        assert_eq!(steps_for(0.5, 0.0125), 40);
        assert_eq!(steps_for(0.3, 0.1), 3);
    }
}

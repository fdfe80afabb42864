//! RSGD on the Stiefel PCA problem.

use serde::Serialize;

use rsmf_core::problems::{make_problem, ProblemName, ProblemSpec};
use rsmf_core::rsgd::{rsgd_path, RsgdConfig};

use crate::error::{ExperimentError, Result};

#[derive(Clone, Debug, Serialize)]
pub struct PcaTrace {
    pub step: usize,
    pub value: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PcaReport {
    pub eta: f64,
    pub n_steps: usize,
    pub optimum: f64,
    pub final_value: f64,
    pub final_gap: f64,
    /// First step at which the gap dropped to `tolerance`.
    pub first_hit: Option<usize>,
    pub tolerance: f64,
    /// Riemannian gradient norm at the eigenvector frame.
    pub grad_norm_at_optimum: f64,
    pub trace: Vec<PcaTrace>,
}

impl PcaReport {
    pub fn passed(&self) -> bool {
        self.first_hit.is_some() && self.grad_norm_at_optimum <= 1e-10
    }
}

/// Runs one RSGD path from the problem's random start frame, recording the
/// objective every `record_every` steps.
pub fn pca_demo(spec: &ProblemSpec, eta: f64, n_steps: usize, seed: u64, tolerance: f64, record_every: usize) -> Result<PcaReport> {
    if spec.problem != ProblemName::PcaStiefel {
        return Err(ExperimentError::Config(format!("pca demo needs pca_stiefel, got {}", spec.problem)));
    }
    let p = make_problem(spec)?;
    let (frame, optimum) = p.optimum.clone().expect("pca has a closed-form optimum");
    let obj = &p.objective;
    let grad_norm_at_optimum = obj.manifold().norm_at(&frame, &obj.grad_at(&frame));
    let cfg = RsgdConfig::new(eta, n_steps, p.retraction, seed);
    let mut first_hit = None;
    let mut trace = Vec::new();
    let every = record_every.max(1);
    let last = rsgd_path(obj, &p.x0, &cfg, 0, |k, x| {
        let value = obj.value(x);
        let gap = value - optimum;
        if first_hit.is_none() && gap <= tolerance {
            first_hit = Some(k);
        }
        if k % every == 0 || k == n_steps {
            trace.push(PcaTrace { step: k, value, gap });
        }
    })?;
    let final_value = obj.value(&last);
    Ok(PcaReport {
        eta,
        n_steps,
        optimum,
        final_value,
        final_gap: final_value - optimum,
        first_hit,
        tolerance,
        grad_norm_at_optimum,
        trace,
    })
}

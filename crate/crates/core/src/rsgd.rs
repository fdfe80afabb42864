//! The discrete scheme `Z_n = retr_{Z_{n−1}}(−η f̃(Z_{n−1}, ξ_n))` and its
//! expectation oracles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::TestFunction;
use crate::error::{Error, Result};
use crate::geometry::{Point, RetractionScheme, Vector};
use crate::noise::StochasticObjective;
use crate::rng;
use crate::stats::{CompensatedSum, MeanVar};

/// Default cap on the number of leaves visited by exact enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 20_000_000;

/// Paths per independently accumulated block in Monte Carlo runs.
pub(crate) const MC_BLOCK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsgdConfig {
    pub eta: f64,
    pub n_steps: usize,
    pub retraction: RetractionScheme,
    pub seed: u64,
}

impl RsgdConfig {
    pub fn new(eta: f64, n_steps: usize, retraction: RetractionScheme, seed: u64) -> Self {
        RsgdConfig {
            eta,
            n_steps,
            retraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::invalid(format!("learning rate {} is not a finite non-negative number", self.eta)));
        }
        if self.n_steps > 0 && !(self.eta > 0.0) {
            return Err(Error::invalid("learning rate must be positive when steps are taken"));
        }
        Ok(())
    }

    fn check_for(&self, obj: &StochasticObjective) -> Result<()> {
        self.validate()?;
        if !self.retraction.is_admissible(&obj.manifold()) {
            return Err(Error::unsupported(format!(
                "{} retraction is not available on {}",
                self.retraction.name(),
                obj.manifold()
            )));
        }
        Ok(())
    }
}

/// A Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: u64,
}

impl From<MeanVar> for McEstimate {
    fn from(acc: MeanVar) -> Self {
        McEstimate {
            mean: acc.mean(),
            std_error: acc.std_error(),
            n_paths: acc.count(),
        }
    }
}

/// One step from raw coordinates. `step` only labels a failure.
pub fn rsgd_step_at(
    obj: &StochasticObjective,
    x: &Vector,
    atom: usize,
    eta: f64,
    retraction: RetractionScheme,
    step: usize,
) -> Result<Vector> {
    if eta == 0.0 {
        return Ok(x.clone());
    }
    let v = obj.atom_at(x, atom) * (-eta);
    obj.manifold()
        .retract_at(x, &v, retraction)
        .map_err(|e| match e {
            Error::TubeViolation(reason) => Error::StepFailure {
                step,
                state: x.iter().copied().collect(),
                reason,
            },
            other => other,
        })
}

/// One RSGD step with a prescribed atom.
pub fn rsgd_step(obj: &StochasticObjective, x: &Point, atom: usize, cfg: &RsgdConfig) -> Result<Point> {
    cfg.check_for(obj)?;
    if x.manifold() != obj.manifold() {
        return Err(Error::invalid("point and objective live on different manifolds"));
    }
    if atom >= obj.atom_count() {
        return Err(Error::invalid(format!(
            "atom index {atom} out of range for {} atoms",
            obj.atom_count()
        )));
    }
    let y = rsgd_step_at(obj, x.coords(), atom, cfg.eta, cfg.retraction, 1)?;
    Ok(Point::new_unchecked(obj.manifold(), y))
}

/// Runs one random path, calling `visit(step, point)` for the start and every
/// iterate. Path `path` is reproducible from `(cfg.seed, path)` alone.
pub fn rsgd_path<F>(obj: &StochasticObjective, x0: &Vector, cfg: &RsgdConfig, path: u64, mut visit: F) -> Result<Vector>
where
    F: FnMut(usize, &Vector),
{
    cfg.check_for(obj)?;
    let mut rng = rng::stream(cfg.seed, path);
    let mut x = x0.clone();
    visit(0, &x);
    for k in 1..=cfg.n_steps {
        rng::reset_step(&mut rng, k as u64);
        let i = obj.space().sample(&mut rng);
        x = rsgd_step_at(obj, &x, i, cfg.eta, cfg.retraction, k)?;
        visit(k, &x);
    }
    Ok(x)
}

/// Number of leaves `mⁿ` of the full enumeration tree.
pub fn enumeration_leaves(m: usize, n: usize) -> f64 {
    (m as f64).powi(n as i32)
}

/// Visits every atom sequence of length `cfg.n_steps` depth-first, passing
/// the sequence probability and terminal point to `leaf`. Fails before doing
/// any work when `mⁿ` exceeds `budget`.
pub fn enumerate_leaves<F>(
    obj: &StochasticObjective,
    x0: &Vector,
    cfg: &RsgdConfig,
    budget: u64,
    mut leaf: F,
) -> Result<()>
where
    F: FnMut(f64, &Vector),
{
    cfg.check_for(obj)?;
    check_budget(obj.atom_count(), cfg.n_steps, budget)?;
    let weights = obj.space().weights();
    let mut stack: Vec<(usize, f64, Vector)> = vec![(0, 1.0, x0.clone())];
    while let Some((depth, p, x)) = stack.pop() {
        if depth == cfg.n_steps {
            leaf(p, &x);
            continue;
        }
        for i in (0..weights.len()).rev() {
            let y = rsgd_step_at(obj, &x, i, cfg.eta, cfg.retraction, depth + 1)?;
            stack.push((depth + 1, p * weights[i], y));
        }
    }
    Ok(())
}

fn check_budget(m: usize, n: usize, budget: u64) -> Result<()> {
    let required = enumeration_leaves(m, n);
    if required > budget as f64 {
        return Err(Error::Budget { required, budget });
    }
    Ok(())
}

/// `E g(Z_n)` summed exactly over all `mⁿ` atom sequences.
pub fn rsgd_exact_expectation(
    obj: &StochasticObjective,
    g: &TestFunction,
    x0: &Vector,
    cfg: &RsgdConfig,
    budget: u64,
) -> Result<f64> {
    cfg.check_for(obj)?;
    check_budget(obj.atom_count(), cfg.n_steps, budget)?;
    if cfg.n_steps == 0 {
        return Ok(g.eval(x0));
    }
    // Fan out over the first-step subtrees; merge in atom order.
    let weights = obj.space().weights();
    let sub = RsgdConfig {
        n_steps: cfg.n_steps - 1,
        ..*cfg
    };
    let partial: Vec<Result<CompensatedSum>> = (0..weights.len())
        .into_par_iter()
        .map(|i| {
            let y = rsgd_step_at(obj, x0, i, cfg.eta, cfg.retraction, 1)?;
            let mut acc = CompensatedSum::new();
            enumerate_leaves(obj, &y, &sub, budget, |p, z| acc.add(p * weights[i] * g.eval(z)))?;
            Ok(acc)
        })
        .collect();
    let mut total = CompensatedSum::new();
    for p in partial {
        total.merge(&p?);
    }
    Ok(total.value())
}

/// Monte Carlo estimate of `E g(Z_n)` over `n_paths` independent paths.
pub fn rsgd_mc_expectation(
    obj: &StochasticObjective,
    g: &TestFunction,
    x0: &Vector,
    cfg: &RsgdConfig,
    n_paths: u64,
) -> Result<McEstimate> {
    cfg.check_for(obj)?;
    if n_paths < 2 {
        return Err(Error::invalid("Monte Carlo needs at least two paths"));
    }
    let acc = blocked_mean(n_paths, |path| {
        rsgd_path(obj, x0, cfg, path, |_, _| {}).map(|z| g.eval(&z))
    })?;
    Ok(acc.into())
}

/// Evaluates `sample(path)` for `0..n_paths` in fixed blocks, possibly in
/// parallel, and merges the block accumulators in block order so the result
/// does not depend on the thread count.
pub(crate) fn blocked_mean<F>(n_paths: u64, sample: F) -> Result<MeanVar>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let blocks = n_paths.div_ceil(MC_BLOCK);
    let parts: Vec<Result<MeanVar>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = MeanVar::new();
            for path in b * MC_BLOCK..((b + 1) * MC_BLOCK).min(n_paths) {
                acc.push(sample(path)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = MeanVar::new();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

//! Empirical order of a retraction: `d(retr_x(t v), exp_x(t v)) = O(t^{k+1})`
//! for a retraction agreeing with the exponential map to order `k`.

use serde::Serialize;

use rsmf_core::geometry::sampling::{random_point, random_unit_tangent};
use rsmf_core::rng;
use rsmf_core::{Manifold, RetractionScheme};

use crate::error::Result;
use crate::harness::fit_rate;

/// Default step grid.
pub const DEFAULT_TS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Distances below this are treated as exact agreement.
const EXACT: f64 = 1e-15;

#[derive(Clone, Debug, Serialize)]
pub struct RetractionOrderReport {
    pub manifold: String,
    pub scheme: RetractionScheme,
    pub second_order: bool,
    pub ts: Vec<f64>,
    /// Worst distance over all pairs at each `t`.
    pub max_distance: Vec<f64>,
    /// Smallest fitted slope over the pairs; `None` when every pair agrees
    /// with the exponential map to rounding.
    pub min_pair_slope: Option<f64>,
    pub pairs: usize,
    pub warnings: Vec<String>,
}

impl RetractionOrderReport {
    /// Slope a retraction of this order must reach.
    pub fn required_slope(&self) -> f64 {
        if self.second_order {
            2.9
        } else {
            1.9
        }
    }

    pub fn passed(&self) -> bool {
        self.min_pair_slope.is_none_or(|s| s >= self.required_slope())
    }
}

pub fn retraction_order(
    m: Manifold,
    scheme: RetractionScheme,
    ts: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<RetractionOrderReport> {
    let mut rng = rng::stream(seed, 0);
    let mut max_distance = vec![0.0f64; ts.len()];
    let mut min_slope: Option<f64> = None;
    let mut warnings = Vec::new();
    let mut exact_pairs = 0;
    for _ in 0..pairs {
        let x = random_point(m, &mut rng);
        let v = random_unit_tangent(&x, &mut rng);
        let mut pts = Vec::with_capacity(ts.len());
        for (k, t) in ts.iter().enumerate() {
            let tv = v.coords() * *t;
            let r = m.retract_at(x.coords(), &tv, scheme)?;
            let e = m.exp_at(x.coords(), &tv);
            let d = m.distance_at(&r, &e);
            max_distance[k] = max_distance[k].max(d);
            pts.push((*t, d));
        }
        if pts.iter().all(|(_, d)| *d <= EXACT) {
            exact_pairs += 1;
            continue;
        }
        let fit = fit_rate(&pts)?;
        min_slope = Some(min_slope.map_or(fit.slope, |s| s.min(fit.slope)));
    }
    if exact_pairs > 0 {
        warnings.push(format!("{exact_pairs} pairs agree with the exponential map to rounding"));
    }
    Ok(RetractionOrderReport {
        manifold: m.name(),
        scheme,
        second_order: scheme.is_second_order(&m),
        ts: ts.to_vec(),
        max_distance,
        min_pair_slope: min_slope,
        pairs,
        warnings,
    })
}

/// Every non-exponential retraction on every manifold kind.
pub fn standard_cases() -> Vec<(Manifold, RetractionScheme)> {
    let mp = RetractionScheme::MetricProjection;
    vec![
        (Manifold::circle(), mp),
        (Manifold::circle(), RetractionScheme::Stereographic),
        (Manifold::sphere(2).expect("valid"), mp),
        (Manifold::sphere(2).expect("valid"), RetractionScheme::Stereographic),
        (Manifold::stiefel(8, 2).expect("valid"), mp),
        (Manifold::product_sphere_euclid(3, 4).expect("valid"), mp),
        (Manifold::hyperboloid(2).expect("valid"), mp),
        (Manifold::fisher_half_plane(), mp),
    ]
}

pub fn run_standard(pairs: usize, seed: u64) -> Result<Vec<RetractionOrderReport>> {
    standard_cases()
        .into_iter()
        .enumerate()
        .map(|(i, (m, s))| retraction_order(m, s, &DEFAULT_TS, pairs, rng::mix64(seed ^ i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_projection_is_second_order() {
        let r = retraction_order(Manifold::sphere(2).unwrap(), RetractionScheme::MetricProjection, &DEFAULT_TS, 10, 1).unwrap();
        assert!(r.second_order);
        // d = t − atan t for unit v.
        let t: f64 = 0.2;
        assert!((r.max_distance[0] - (t - t.atan())).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn exponential_agrees_with_itself() {
        let r = retraction_order(Manifold::sphere(2).unwrap(), RetractionScheme::Exponential, &DEFAULT_TS, 5, 1).unwrap();
        assert_eq!(r.min_pair_slope, None);
        assert_eq!(r.warnings.len(), 1);
    }
}

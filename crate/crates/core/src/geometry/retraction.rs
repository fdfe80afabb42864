use serde::{Deserialize, Serialize};

use super::{Manifold, ManifoldKind};

/// Map from the tangent bundle back onto the manifold used by the SGD step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetractionScheme {
    Exponential,
    /// `proj(x + c(x, v))` with the smooth cutoff `c`. On the Fisher chart,
    /// whose domain is open, this is plain chart addition.
    MetricProjection,
    /// Inverse stereographic projection from the antipode `-x` through the
    /// tangent plane at `x`, scaled so that `D₀ retr = id`:
    /// `retr_x(v) = ((1 - |v|²/4) x + v) / (1 + |v|²/4)`.
    Stereographic,
}

impl RetractionScheme {
    pub const ALL: [RetractionScheme; 3] = [
        RetractionScheme::Exponential,
        RetractionScheme::MetricProjection,
        RetractionScheme::Stereographic,
    ];

    pub fn is_admissible(&self, m: &Manifold) -> bool {
        match self {
            RetractionScheme::Stereographic => m.is_round_sphere(),
            _ => true,
        }
    }

    /// Zero initial covariant acceleration along `t ↦ retr_x(tv)`.
    pub fn is_second_order(&self, m: &Manifold) -> bool {
        match self {
            RetractionScheme::Exponential => true,
            RetractionScheme::Stereographic => m.is_round_sphere(),
            RetractionScheme::MetricProjection => m.is_embedded(),
        }
    }

    /// Exponential where it has a closed form (or a cheap chart ODE),
    /// metric projection on Stiefel and the product manifold.
    pub fn default_for(m: &Manifold) -> Self {
        match m.kind() {
            ManifoldKind::Stiefel { .. } | ManifoldKind::ProductSphereEuclid { .. } => {
                RetractionScheme::MetricProjection
            }
            _ => RetractionScheme::Exponential,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RetractionScheme::Exponential => "exponential",
            RetractionScheme::MetricProjection => "metric_projection",
            RetractionScheme::Stereographic => "stereographic",
        }
    }
}

impl std::str::FromStr for RetractionScheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "exponential" | "exp" => Ok(RetractionScheme::Exponential),
            "metric_projection" | "projection" => Ok(RetractionScheme::MetricProjection),
            "stereographic" => Ok(RetractionScheme::Stereographic),
            other => Err(crate::Error::invalid(format!("unknown retraction '{other}'"))),
        }
    }
}

/// Radial profile of the cutoff: identity on `[0, r/2]`, then a tanh clamp
/// that keeps the result below `r`. C² at the junction.
pub(crate) fn cutoff_norm(s: f64, radius: f64) -> f64 {
    let knee = 0.5 * radius;
    if s <= knee {
        s
    } else {
        let span = radius - knee;
        knee + span * ((s - knee) / span).tanh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_identity_inside_knee_and_bounded_outside() {
        assert_eq!(cutoff_norm(0.1, 0.5), 0.1);
        assert_eq!(cutoff_norm(0.25, 0.5), 0.25);
        assert!(cutoff_norm(0.3, 0.5) < 0.3);
        assert!(cutoff_norm(100.0, 0.5) <= 0.5);
        // C¹ across the knee.
        let h = 1e-7;
        let slope = (cutoff_norm(0.25 + h, 0.5) - cutoff_norm(0.25, 0.5)) / h;
        assert!((slope - 1.0).abs() < 1e-5);
    }

    #[test]
    fn stereographic_only_on_spheres() {
        assert!(RetractionScheme::Stereographic.is_admissible(&Manifold::circle()));
        assert!(!RetractionScheme::Stereographic.is_admissible(&Manifold::stiefel(3, 2).unwrap()));
        assert!(!RetractionScheme::MetricProjection.is_second_order(&Manifold::fisher_half_plane()));
    }
}

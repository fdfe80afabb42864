use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which manifold a point lives on, with its dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    /// Unit circle in ℝ².
    Circle,
    /// Unit sphere Sᵈ in ℝᵈ⁺¹.
    Sphere { dim: usize },
    /// n×r matrices with orthonormal columns, stored column-major.
    Stiefel { n: usize, r: usize },
    /// Weight-normalised one-hidden-layer parameters:
    /// `d1` unit vectors in ℝ^`d0`, then ℝ^`d1` × ℝ^`d1` × ℝ.
    ProductSphereEuclid { d0: usize, d1: usize },
    /// Hyperboloid model of hyperbolic space Hᵈ in Minkowski space ℝ^{1,d}.
    Hyperboloid { dim: usize },
    /// Upper half-plane of (μ, σ) with the Fisher metric of N(μ, σ²).
    FisherHalfPlane,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFamily {
    InducedEuclidean,
    Minkowski,
    FisherChart,
}

/// Manifold descriptor. Selects every geometric formula used downstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DescriptorRepr", into = "DescriptorRepr")]
pub struct Manifold {
    kind: ManifoldKind,
}

#[derive(Serialize, Deserialize)]
struct DescriptorRepr {
    kind: String,
    #[serde(default)]
    params: Vec<usize>,
}

impl Manifold {
    pub const fn circle() -> Self {
        Manifold {
            kind: ManifoldKind::Circle,
        }
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sphere dimension must be positive"));
        }
        Ok(Manifold {
            kind: ManifoldKind::Sphere { dim },
        })
    }

    pub fn stiefel(n: usize, r: usize) -> Result<Self> {
        if r == 0 || r > n {
            return Err(Error::invalid(format!("Stiefel({n},{r}) needs 1 <= r <= n")));
        }
        Ok(Manifold {
            kind: ManifoldKind::Stiefel { n, r },
        })
    }

    pub fn product_sphere_euclid(d0: usize, d1: usize) -> Result<Self> {
        if d0 < 2 || d1 == 0 {
            return Err(Error::invalid(format!(
                "ProductSphereEuclid({d0},{d1}) needs d0 >= 2 and d1 >= 1"
            )));
        }
        Ok(Manifold {
            kind: ManifoldKind::ProductSphereEuclid { d0, d1 },
        })
    }

    pub fn hyperboloid(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("hyperboloid dimension must be positive"));
        }
        Ok(Manifold {
            kind: ManifoldKind::Hyperboloid { dim },
        })
    }

    pub const fn fisher_half_plane() -> Self {
        Manifold {
            kind: ManifoldKind::FisherHalfPlane,
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 2,
            ManifoldKind::Sphere { dim } => dim + 1,
            ManifoldKind::Stiefel { n, r } => n * r,
            ManifoldKind::ProductSphereEuclid { d0, d1 } => d0 * d1 + 2 * d1 + 1,
            ManifoldKind::Hyperboloid { dim } => dim + 1,
            ManifoldKind::FisherHalfPlane => 2,
        }
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            ManifoldKind::Sphere { dim } => dim,
            ManifoldKind::Stiefel { n, r } => n * r - r * (r + 1) / 2,
            ManifoldKind::ProductSphereEuclid { d0, d1 } => d1 * (d0 - 1) + 2 * d1 + 1,
            ManifoldKind::Hyperboloid { dim } => dim,
            ManifoldKind::FisherHalfPlane => 2,
        }
    }

    pub fn metric_family(&self) -> MetricFamily {
        match self.kind {
            ManifoldKind::Hyperboloid { .. } => MetricFamily::Minkowski,
            ManifoldKind::FisherHalfPlane => MetricFamily::FisherChart,
            _ => MetricFamily::InducedEuclidean,
        }
    }

    /// Whether the manifold is an embedded submanifold with an ambient
    /// metric projection (everything except the Fisher chart).
    pub fn is_embedded(&self) -> bool {
        !matches!(self.kind, ManifoldKind::FisherHalfPlane)
    }

    /// Circle and sphere, the kinds with closed-form exponential, transport
    /// and stereographic retraction.
    pub fn is_round_sphere(&self) -> bool {
        matches!(self.kind, ManifoldKind::Circle | ManifoldKind::Sphere { .. })
    }

    /// Radius of the tube inside which retraction steps are left untouched
    /// by the cutoff.
    pub fn tube_radius(&self) -> f64 {
        0.5
    }

    pub fn name(&self) -> String {
        let repr = DescriptorRepr::from(*self);
        if repr.params.is_empty() {
            repr.kind
        } else {
            let p: Vec<String> = repr.params.iter().map(|p| p.to_string()).collect();
            format!("{}({})", repr.kind, p.join(","))
        }
    }
}

impl From<Manifold> for DescriptorRepr {
    fn from(m: Manifold) -> Self {
        let (kind, params) = match m.kind {
            ManifoldKind::Circle => ("circle", vec![]),
            ManifoldKind::Sphere { dim } => ("sphere", vec![dim]),
            ManifoldKind::Stiefel { n, r } => ("stiefel", vec![n, r]),
            ManifoldKind::ProductSphereEuclid { d0, d1 } => ("product_sphere_euclid", vec![d0, d1]),
            ManifoldKind::Hyperboloid { dim } => ("hyperboloid", vec![dim]),
            ManifoldKind::FisherHalfPlane => ("fisher_half_plane", vec![]),
        };
        DescriptorRepr {
            kind: kind.to_string(),
            params,
        }
    }
}

impl TryFrom<DescriptorRepr> for Manifold {
    type Error = Error;

    fn try_from(repr: DescriptorRepr) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if repr.params.len() != n {
                Err(Error::invalid(format!(
                    "manifold kind '{}' takes {n} params, got {}",
                    repr.kind,
                    repr.params.len()
                )))
            } else {
                Ok(())
            }
        };
        match repr.kind.as_str() {
            "circle" => want(0).map(|_| Manifold::circle()),
            "sphere" => want(1).and_then(|_| Manifold::sphere(repr.params[0])),
            "stiefel" => want(2).and_then(|_| Manifold::stiefel(repr.params[0], repr.params[1])),
            "product_sphere_euclid" => {
                want(2).and_then(|_| Manifold::product_sphere_euclid(repr.params[0], repr.params[1]))
            }
            "hyperboloid" => want(1).and_then(|_| Manifold::hyperboloid(repr.params[0])),
            "fisher_half_plane" => want(0).map(|_| Manifold::fisher_half_plane()),
            other => Err(Error::invalid(format!("unknown manifold kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for Manifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

//! Geometry and noise invariants checked at random points on every
//! manifold kind.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use rsmf_core::geometry::sampling::{random_point, random_tangent};
use rsmf_core::geometry::{JacobianMode, ProjectedAffineField, Vector, VectorField};
use rsmf_core::problems::{default_problem, ProblemName};
use rsmf_core::rng;
use rsmf_core::Manifold;

use crate::error::Result;

pub const TANGENCY_TOL: f64 = 1e-10;
pub const IDEMPOTENCE_TOL: f64 = 1e-12;
pub const TRANSPORT_TOL: f64 = 1e-8;
pub const UNBIASEDNESS_TOL: f64 = 1e-10;
pub const COVARIANT_FD_TOL: f64 = 1e-6;
pub const METRIC_COMPATIBILITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct InvariantCheck {
    pub manifold: String,
    pub check: &'static str,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

struct Tally {
    manifold: String,
    checks: Vec<InvariantCheck>,
}

impl Tally {
    fn record(&mut self, check: &'static str, tolerance: f64, residuals: impl IntoIterator<Item = f64>) {
        let mut samples = 0;
        let mut worst = 0.0f64;
        let mut finite = true;
        for r in residuals {
            samples += 1;
            finite &= r.is_finite();
            worst = worst.max(r);
        }
        self.checks.push(InvariantCheck {
            manifold: self.manifold.clone(),
            check,
            samples,
            max_residual: if finite { worst } else { f64::NAN },
            tolerance,
            passed: finite && worst <= tolerance,
        });
    }
}

fn gaussian<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// The testbed problem living on each manifold kind.
pub const TESTBEDS: [ProblemName; 6] = [
    ProblemName::CircleTestbed,
    ProblemName::SphereRayleigh,
    ProblemName::PcaStiefel,
    ProblemName::WeightNorm,
    ProblemName::HyperbolicMean,
    ProblemName::FisherKl,
];

/// Runs every check with `samples` random points per manifold kind.
pub fn run_invariants(samples: usize, seed: u64) -> Result<Vec<InvariantCheck>> {
    let mut out = Vec::new();
    for (k, name) in TESTBEDS.into_iter().enumerate() {
        out.extend(check_problem(name, samples, rng::mix64(seed ^ k as u64))?);
    }
    Ok(out)
}

fn check_problem(name: ProblemName, samples: usize, seed: u64) -> Result<Vec<InvariantCheck>> {
    let problem = default_problem(name);
    let obj = &problem.objective;
    let m: Manifold = obj.manifold();
    let n = m.ambient_dim();
    let mut rng = rng::stream(seed, 0);
    let mut t = Tally {
        manifold: m.name(),
        checks: Vec::new(),
    };

    let points: Vec<_> = (0..samples).map(|_| random_point(m, &mut rng)).collect();
    let ambient: Vec<Vector> = (0..samples).map(|_| gaussian(&mut rng, n)).collect();
    let pairs: Vec<_> = points
        .iter()
        .map(|x| (random_tangent(x, &mut rng), random_tangent(x, &mut rng), random_tangent(x, &mut rng)))
        .collect();

    t.record(
        "on_manifold",
        TANGENCY_TOL,
        points.iter().map(|x| m.residual(x.coords())),
    );
    t.record(
        "tangency",
        TANGENCY_TOL,
        points.iter().zip(&ambient).flat_map(|(x, z)| {
            let x = x.coords();
            let mut r = vec![m.tangency_residual(x, &m.project_tangent_at(x, z)), m.tangency_residual(x, &obj.grad_at(x))];
            r.extend((0..obj.atom_count()).map(|i| m.tangency_residual(x, &obj.atom_at(x, i))));
            r
        }),
    );
    t.record(
        "tangent_projection_idempotence",
        IDEMPOTENCE_TOL,
        points.iter().zip(&ambient).map(|(x, z)| {
            let p = m.project_tangent_at(x.coords(), z);
            (m.project_tangent_at(x.coords(), &p) - p).amax()
        }),
    );
    let mut projection = Vec::with_capacity(samples);
    for (x, z) in points.iter().zip(&ambient) {
        // A point near the manifold: inside every tube.
        let tz = m.project_tangent_at(x.coords(), z);
        let near = x.coords() + &tz * (0.1 / (1.0 + m.norm_at(x.coords(), &tz)));
        let near = match m.kind() {
            rsmf_core::ManifoldKind::FisherHalfPlane => near,
            _ => {
                let normal = z - m.project_tangent_at(x.coords(), z);
                let scale = 0.05 / (1.0 + normal.norm());
                near + normal * scale
            }
        };
        let once = match m.kind() {
            rsmf_core::ManifoldKind::FisherHalfPlane => near,
            _ => m.project_point(&near)?,
        };
        let twice = match m.kind() {
            rsmf_core::ManifoldKind::FisherHalfPlane => once.clone(),
            _ => m.project_point(&once)?,
        };
        projection.push((twice - once).amax());
    }
    t.record("point_projection_idempotence", IDEMPOTENCE_TOL, projection);

    let mut transport = Vec::with_capacity(samples);
    for (x, (d, v, w)) in points.iter().zip(&pairs) {
        let x = x.coords();
        // Unit vectors, so the residual is relative.
        let unit = |t: &Vector| t / m.norm_at(x, t);
        let (d, v, w) = (unit(d.coords()), unit(v.coords()), unit(w.coords()));
        let (d, v, w) = (&d, &v, &w);
        let y = m.exp_at(x, d);
        let tv = m.transport_at(x, d, v)?;
        let tw = m.transport_at(x, d, w)?;
        transport.push((m.inner_at(&y, &tv, &tw) - m.inner_at(x, v, w)).abs());
        transport.push((m.norm_at(&y, &tw) - m.norm_at(x, w)).abs());
    }
    t.record("transport_isometry", TRANSPORT_TOL, transport);

    t.record(
        "unbiasedness",
        UNBIASEDNESS_TOL,
        points.iter().map(|x| obj.unbiasedness_residual(x.coords())),
    );

    let a = {
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&g + g.transpose()) * 0.5
    };
    let b = gaussian(&mut rng, n);
    let affine = ProjectedAffineField::new(m, a, b);
    let mut fields: Vec<&dyn VectorField> = vec![&affine];
    let analytic_atoms: Vec<_> = (0..obj.atom_count())
        .map(|i| obj.atom(i))
        .filter(|f| f.ambient_derivative(points[0].coords(), pairs[0].0.coords()).is_some())
        .collect();
    for f in &analytic_atoms {
        fields.push(f.as_ref());
    }
    let mut covariant = Vec::new();
    for (x, (d, _, _)) in points.iter().zip(&pairs) {
        for f in &fields {
            let an = m.covariant_derivative_at(*f, x.coords(), d.coords(), JacobianMode::Analytic)?;
            let fd = m.covariant_derivative_at(*f, x.coords(), d.coords(), JacobianMode::FiniteDifference)?;
            covariant.push((an - fd).amax());
        }
    }
    t.record("covariant_derivative_fd", COVARIANT_FD_TOL, covariant);

    // d/dt ⟨X, Y⟩ = ⟨∇X, Y⟩ + ⟨X, ∇Y⟩ along a curve through x with velocity d.
    let other = ProjectedAffineField::new(
        m,
        DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 }),
        gaussian(&mut rng, n),
    );
    let mut compat = Vec::with_capacity(samples);
    for (x, (d, _, _)) in points.iter().zip(&pairs) {
        let (x, d) = (x.coords(), d.coords());
        let h = 1e-4 / d.norm().max(1e-12);
        let pair_at = |s: f64| -> Result<f64> {
            let z = x + d * s;
            let y = match m.kind() {
                rsmf_core::ManifoldKind::FisherHalfPlane => z,
                _ => m.project_point(&z)?,
            };
            Ok(m.inner_at(&y, &affine.value(&y), &other.value(&y)))
        };
        let fd = (pair_at(h)? - pair_at(-h)? - (pair_at(2.0 * h)? - pair_at(-2.0 * h)?) / 8.0) / (1.5 * h);
        let dx = m.covariant_derivative_at(&affine, x, d, JacobianMode::Analytic)?;
        let dy = m.covariant_derivative_at(&other, x, d, JacobianMode::Analytic)?;
        let an = m.inner_at(x, &dx, &other.value(x)) + m.inner_at(x, &affine.value(x), &dy);
        compat.push((an - fd).abs() / (1.0 + an.abs()));
    }
    t.record("metric_compatibility", METRIC_COMPATIBILITY_TOL, compat);

    Ok(t.checks)
}

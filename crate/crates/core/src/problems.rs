//! Example objectives.
//!
//! | name              | manifold                         | f                                   |
//! |-------------------|----------------------------------|-------------------------------------|
//! | `circle_testbed`  | circle                           | `−x₁`, noise `±c(x₁) J x`           |
//! | `sphere_rayleigh` | `S^{d−1}`                        | `−½ xᵀAx`, `A = E zzᵀ`              |
//! | `pca_stiefel`     | `St(n, r)`                       | `−½ tr(BᵀAB)`                       |
//! | `weight_norm`     | `(S^{d0−1})^{d1} × ℝ^{2d1+1}`    | least squares of a ReLU network     |
//! | `hyperbolic_mean` | hyperboloid                      | `½ E d(x, p)²`                      |
//! | `fisher_kl`       | Fisher half-plane                | `E KL(N(m, s²) ‖ N(μ, σ²))`         |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calculus::TestFunction;
use crate::error::{Error, Result};
use crate::geometry::{FnField, Manifold, RetractionScheme, Vector, VectorField};
use crate::noise::{Component, FiniteSampleSpace, StochasticObjective};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    CircleTestbed,
    SphereRayleigh,
    PcaStiefel,
    WeightNorm,
    HyperbolicMean,
    FisherKl,
}

impl ProblemName {
    pub const ALL: [ProblemName; 6] = [
        ProblemName::CircleTestbed,
        ProblemName::SphereRayleigh,
        ProblemName::PcaStiefel,
        ProblemName::WeightNorm,
        ProblemName::HyperbolicMean,
        ProblemName::FisherKl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemName::CircleTestbed => "circle_testbed",
            ProblemName::SphereRayleigh => "sphere_rayleigh",
            ProblemName::PcaStiefel => "pca_stiefel",
            ProblemName::WeightNorm => "weight_norm",
            ProblemName::HyperbolicMean => "hyperbolic_mean",
            ProblemName::FisherKl => "fisher_kl",
        }
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProblemName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown problem '{s}'")))
    }
}

/// Problem name plus parameters; unspecified parameters take the catalog
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem: ProblemName,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    /// Number of data atoms, overriding the `m` parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    /// Atom weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn new(problem: ProblemName) -> Self {
        ProblemSpec {
            problem,
            params: BTreeMap::new(),
            atoms: None,
            weights: None,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// One documented parameter of a catalog entry.
#[derive(Clone, Debug, Serialize)]
pub struct ParamInfo {
    pub name: &'static str,
    pub default: Value,
    pub doc: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemInfo {
    pub name: ProblemName,
    pub manifold: &'static str,
    pub summary: &'static str,
    pub params: Vec<ParamInfo>,
}

fn p(name: &'static str, default: Value, doc: &'static str) -> ParamInfo {
    ParamInfo { name, default, doc }
}

/// The problem catalog with parameter schemas and defaults.
pub fn catalog() -> Vec<ProblemInfo> {
    use serde_json::json;
    vec![
        ProblemInfo {
            name: ProblemName::CircleTestbed,
            manifold: "circle",
            summary: "f(θ) = −cos θ with two symmetric atoms f̃ = grad f ± c(θ)∂θ, c(θ) = c0 + c1 cos θ",
            params: vec![
                p("c0", json!(0.5), "constant noise amplitude"),
                p("c1", json!(0.25), "cos θ noise amplitude"),
                p("theta0", json!(1.0), "start angle"),
            ],
        },
        ProblemInfo {
            name: ProblemName::SphereRayleigh,
            manifold: "sphere(d-1)",
            summary: "f(x) = −½ xᵀAx on the unit sphere, A the second moment of m Gaussian samples",
            params: vec![
                p("d", json!(3), "ambient dimension"),
                p("m", json!(8), "number of samples (atoms)"),
                p("cov", json!([1.0, 0.6, 0.3]), "diagonal sample covariance"),
                p("seed", json!(7), "data seed"),
                p("samples", json!(null), "explicit sample list, overrides m/cov/seed"),
                p("x0", json!([0.3, 0.5, 0.8]), "start point, normalized"),
            ],
        },
        ProblemInfo {
            name: ProblemName::PcaStiefel,
            manifold: "stiefel(n,r)",
            summary: "f(B) = −½ tr(BᵀAB) with f̃(B, ξ) = P_B(−z zᵀ B) over m samples z",
            params: vec![
                p("n", json!(8), "ambient dimension"),
                p("r", json!(2), "number of components"),
                p("m", json!(32), "number of samples (atoms)"),
                p("cov", json!([1.0, 0.8, 0.05, 0.04, 0.03, 0.02, 0.01, 0.01]), "diagonal sample covariance"),
                p("seed", json!(11), "data and start-frame seed"),
                p("samples", json!(null), "explicit sample list, overrides m/cov/seed"),
            ],
        },
        ProblemInfo {
            name: ProblemName::WeightNorm,
            manifold: "product_sphere_euclid(d0,d1)",
            summary: "least squares of a weight-normalized one-hidden-layer ReLU network against a random teacher",
            params: vec![
                p("d0", json!(3), "input dimension"),
                p("d1", json!(4), "hidden units"),
                p("m", json!(16), "number of training pairs (atoms)"),
                p("seed", json!(5), "teacher, data and start seed"),
            ],
        },
        ProblemInfo {
            name: ProblemName::HyperbolicMean,
            manifold: "hyperboloid(d)",
            summary: "Fréchet mean f(x) = ½ E d(x, p)² of m random points on the hyperboloid",
            params: vec![
                p("d", json!(2), "intrinsic dimension"),
                p("m", json!(6), "number of data points (atoms)"),
                p("spread", json!(0.8), "standard deviation of the spatial coordinates"),
                p("seed", json!(3), "data seed"),
            ],
        },
        ProblemInfo {
            name: ProblemName::FisherKl,
            manifold: "fisher_half_plane",
            summary: "f(μ, σ) = E KL(N(m, s²) ‖ N(μ, σ²)) over m target normals",
            params: vec![
                p("means", json!([-1.0, 0.0, 0.5, 1.5]), "target means"),
                p("stds", json!([0.5, 1.0, 0.8, 1.2]), "target standard deviations"),
                p("mu0", json!(0.0), "start mean"),
                p("sigma0", json!(1.0), "start standard deviation"),
            ],
        },
    ]
}

/// A constructed problem.
#[derive(Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub objective: StochasticObjective,
    pub x0: Vector,
    /// Default test function for expectations.
    pub test_function: TestFunction,
    pub retraction: RetractionScheme,
    /// Known minimizer and minimum, when available in closed form.
    pub optimum: Option<(Vector, f64)>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("spec", &self.spec)
            .field("x0", &self.x0.as_slice())
            .finish()
    }
}

struct Params<'a> {
    spec: &'a ProblemSpec,
    info: ProblemInfo,
}

impl<'a> Params<'a> {
    fn new(spec: &'a ProblemSpec) -> Result<Self> {
        let info = catalog()
            .into_iter()
            .find(|i| i.name == spec.problem)
            .expect("every problem is in the catalog");
        for key in spec.params.keys() {
            if !info.params.iter().any(|p| p.name == key) {
                return Err(Error::invalid(format!("{} has no parameter '{key}'", spec.problem)));
            }
        }
        Ok(Params { spec, info })
    }

    fn raw(&self, key: &str) -> &Value {
        match self.spec.params.get(key) {
            Some(v) => v,
            None => {
                &self
                    .info
                    .params
                    .iter()
                    .find(|p| p.name == key)
                    .expect("parameter documented in the catalog")
                    .default
            }
        }
    }

    fn bad(&self, key: &str, want: &str) -> Error {
        Error::invalid(format!("{}: parameter '{key}' must be {want}", self.spec.problem))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.raw(key).as_f64().ok_or_else(|| self.bad(key, "a number"))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key)
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| self.bad(key, "a non-negative integer"))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.raw(key).as_u64().ok_or_else(|| self.bad(key, "a non-negative integer"))
    }

    fn vec(&self, key: &str) -> Result<Vec<f64>> {
        serde_json::from_value(self.raw(key).clone()).map_err(|_| self.bad(key, "a list of numbers"))
    }

    fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        match self.raw(key) {
            Value::Null => Ok(None),
            v => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|_| self.bad(key, "a list of lists of numbers")),
        }
    }

    fn atoms(&self, default: usize) -> usize {
        self.spec.atoms.unwrap_or(default)
    }

    fn space(&self, m: usize) -> Result<FiniteSampleSpace> {
        match &self.spec.weights {
            Some(w) => {
                if w.len() != m {
                    return Err(Error::invalid(format!("{} weights for {m} atoms", w.len())));
                }
                FiniteSampleSpace::new(w.clone())
            }
            None => FiniteSampleSpace::uniform(m),
        }
    }
}

/// Builds the objective, start point and default test function of a spec.
pub fn make_problem(spec: &ProblemSpec) -> Result<Problem> {
    let params = Params::new(spec)?;
    match spec.problem {
        ProblemName::CircleTestbed => circle_testbed(&params),
        ProblemName::SphereRayleigh => sphere_rayleigh(&params),
        ProblemName::PcaStiefel => pca_stiefel(&params),
        ProblemName::WeightNorm => weight_norm(&params),
        ProblemName::HyperbolicMean => hyperbolic_mean(&params),
        ProblemName::FisherKl => fisher_kl(&params),
    }
}

/// Defaults of a catalog entry.
pub fn default_problem(name: ProblemName) -> Problem {
    make_problem(&ProblemSpec::new(name)).expect("catalog defaults are valid")
}

fn v(c: &[f64]) -> Vector {
    Vector::from_column_slice(c)
}

fn finish(spec: &ProblemSpec, objective: StochasticObjective, x0: Vector, g: TestFunction, optimum: Option<(Vector, f64)>) -> Result<Problem> {
    let m = objective.manifold();
    let x0 = m.project_or_chart(x0)?;
    Ok(Problem {
        spec: spec.clone(),
        retraction: RetractionScheme::default_for(&m),
        objective,
        x0,
        test_function: g,
        optimum,
    })
}

// Circle.

fn circle_testbed(p: &Params) -> Result<Problem> {
    let c0 = p.f64("c0")?;
    let c1 = p.f64("c1")?;
    let th0 = p.f64("theta0")?;
    if p.spec.atoms.is_some_and(|m| m != 2) {
        return Err(Error::invalid("circle_testbed has exactly two atoms"));
    }
    if let Some(w) = &p.spec.weights {
        if w.len() != 2 || (w[0] - w[1]).abs() > 1e-15 {
            return Err(Error::invalid("circle_testbed needs two equal weights to stay unbiased"));
        }
    }
    let m = Manifold::circle();
    let f = TestFunction::new("-x1", |x: &Vector| -x[0])
        .with_gradient(|_| v(&[-1.0, 0.0]))
        .with_hvp(|_, _| v(&[0.0, 0.0]));
    let gf = f.gradient_field(m).expect("analytic gradient");
    let atom = |sign: f64| -> Arc<dyn VectorField> {
        let (g1, g2) = (gf.clone(), gf.clone());
        Arc::new(FnField::with_derivative(
            move |x: &Vector| g1.value(x) + v(&[-x[1], x[0]]) * (sign * (c0 + c1 * x[0])),
            move |x: &Vector, d: &Vector| {
                g2.ambient_derivative(x, d).expect("analytic gradient")
                    + (v(&[-x[1], x[0]]) * (c1 * d[0]) + v(&[-d[1], d[0]]) * (c0 + c1 * x[0])) * sign
            },
        ))
    };
    let space = FiniteSampleSpace::with_labels(vec!["plus".into(), "minus".into()], vec![0.5, 0.5])?;
    let obj = StochasticObjective::new(m, "circle_testbed", f, space, vec![atom(1.0), atom(-1.0)])?;
    finish(p.spec, obj, v(&[th0.cos(), th0.sin()]), TestFunction::coordinate(1), Some((v(&[1.0, 0.0]), -1.0)))
}

// Rayleigh quotient and PCA.

fn gaussian_samples(m: usize, cov: &[f64], seed: u64) -> Vec<Vector> {
    let mut rng = rng::stream(seed, 0);
    (0..m)
        .map(|_| Vector::from_fn(cov.len(), |i, _| cov[i].sqrt() * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

fn samples(p: &Params, dim: usize, default_m: usize) -> Result<Vec<Vector>> {
    if let Some(rows) = p.matrix("samples")? {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid(format!("every sample must have length {dim}")));
        }
        if rows.is_empty() {
            return Err(Error::invalid("sample list is empty"));
        }
        return Ok(rows.iter().map(|r| v(r)).collect());
    }
    let cov = p.vec("cov")?;
    if cov.len() != dim {
        return Err(Error::invalid(format!("covariance has {} entries for dimension {dim}", cov.len())));
    }
    if cov.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::invalid("covariance entries must be non-negative"));
    }
    let m = p.atoms(default_m);
    if m == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    Ok(gaussian_samples(m, &cov, p.u64("seed")?))
}

fn second_moment(zs: &[Vector], w: &[f64]) -> DMatrix<f64> {
    let n = zs[0].len();
    let mut a = DMatrix::zeros(n, n);
    for (z, wi) in zs.iter().zip(w) {
        a += z * z.transpose() * *wi;
    }
    a
}

/// Eigenpairs sorted by decreasing eigenvalue.
fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|i, j| e.eigenvalues[*j].total_cmp(&e.eigenvalues[*i]));
    let vals = idx.iter().map(|i| e.eigenvalues[*i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// `φ(B) = −½ Σ_k (zᵀ b_k)²` over the `r` columns of a column-major frame.
fn frame_component(z: Vector, n: usize, r: usize) -> Component {
    let z = Arc::new(z);
    let (z1, z2, z3) = (z.clone(), z.clone(), z.clone());
    Component {
        value: Arc::new(move |x: &Vector| {
            (0..r).map(|k| -0.5 * z1.dot(&x.rows(k * n, n)).powi(2)).sum()
        }),
        gradient: Arc::new(move |x: &Vector| {
            let mut out = Vector::zeros(n * r);
            for k in 0..r {
                let c = -z2.dot(&x.rows(k * n, n));
                out.rows_mut(k * n, n).axpy(c, &*z2, 0.0);
            }
            out
        }),
        hvp: Some(Arc::new(move |_x: &Vector, d: &Vector| {
            let mut out = Vector::zeros(n * r);
            for k in 0..r {
                let c = -z3.dot(&d.rows(k * n, n));
                out.rows_mut(k * n, n).axpy(c, &*z3, 0.0);
            }
            out
        })),
    }
}

fn sphere_rayleigh(p: &Params) -> Result<Problem> {
    let d = p.usize("d")?;
    if d < 2 {
        return Err(Error::invalid("sphere_rayleigh needs d ≥ 2"));
    }
    let zs = samples(p, d, p.usize("m")?)?;
    let space = p.space(zs.len())?;
    let a = second_moment(&zs, space.weights());
    let (vals, vecs) = sorted_eigen(&a);
    let m = Manifold::sphere(d - 1)?;
    let comps = zs.into_iter().map(|z| frame_component(z, d, 1)).collect();
    let obj = StochasticObjective::from_components(m, "sphere_rayleigh", space, comps)?;
    let x0 = match p.spec.params.get("x0") {
        Some(_) => v(&p.vec("x0")?),
        None if d == 3 => v(&p.vec("x0")?),
        None => Vector::from_element(d, 1.0),
    };
    if x0.len() != d {
        return Err(Error::invalid(format!("x0 must have length {d}")));
    }
    let top = vecs.column(0).into_owned();
    finish(p.spec, obj, x0, TestFunction::coordinate(0), Some((top, -0.5 * vals[0])))
}

fn pca_stiefel(p: &Params) -> Result<Problem> {
    let n = p.usize("n")?;
    let r = p.usize("r")?;
    let m = Manifold::stiefel(n, r)?;
    let zs = samples(p, n, p.usize("m")?)?;
    let space = p.space(zs.len())?;
    let a = second_moment(&zs, space.weights());
    let (vals, vecs) = sorted_eigen(&a);
    let comps = zs.into_iter().map(|z| frame_component(z, n, r)).collect();
    let obj = StochasticObjective::from_components(m, "pca_stiefel", space, comps)?;
    let frame = Vector::from_iterator(n * r, vecs.columns(0, r).iter().copied());
    let optimum = -0.5 * vals[..r].iter().sum::<f64>();
    let mut rng = rng::stream(p.u64("seed")?, 1);
    let x0 = Vector::from_fn(n * r, |_, _| rng.sample(StandardNormal));
    finish(p.spec, obj, x0, TestFunction::coordinate(0), Some((frame, optimum)))
}

/// `f(B) = −½ tr(BᵀAB)` for a column-major frame.
pub fn pca_value(a: &DMatrix<f64>, x: &Vector, n: usize, r: usize) -> f64 {
    (0..r)
        .map(|k| {
            let b = x.rows(k * n, n);
            -0.5 * (b.transpose() * a * b)[(0, 0)]
        })
        .sum()
}

// Weight normalization.

/// Layout of the weight-normalized network parameters: `d1` unit input
/// directions, then `d1` scales, `d1` output weights and one output bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightNormLayout {
    pub d0: usize,
    pub d1: usize,
}

impl WeightNormLayout {
    pub fn len(&self) -> usize {
        self.d0 * self.d1 + 2 * self.d1 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn dir(&self, x: &Vector, j: usize) -> Vector {
        x.rows(j * self.d0, self.d0).into_owned()
    }

    fn scale(&self, j: usize) -> usize {
        self.d0 * self.d1 + j
    }

    fn out(&self, j: usize) -> usize {
        self.d0 * self.d1 + self.d1 + j
    }

    fn bias(&self) -> usize {
        self.d0 * self.d1 + 2 * self.d1
    }

    /// `Σ_j a_j relu(g_j ⟨w_j, u⟩) + c`.
    pub fn output(&self, x: &Vector, u: &Vector) -> f64 {
        let mut s = x[self.bias()];
        for j in 0..self.d1 {
            s += x[self.out(j)] * (x[self.scale(j)] * self.dir(x, j).dot(u)).max(0.0);
        }
        s
    }

    /// Gradient of `½(output(u) − y)²`.
    fn loss_gradient(&self, x: &Vector, u: &Vector, y: f64) -> Vector {
        let r = self.output(x, u) - y;
        let mut out = Vector::zeros(self.len());
        for j in 0..self.d1 {
            let wu = self.dir(x, j).dot(u);
            let g = x[self.scale(j)];
            let a = x[self.out(j)];
            let pre = g * wu;
            if pre > 0.0 {
                out.rows_mut(j * self.d0, self.d0).axpy(r * a * g, u, 0.0);
                out[self.scale(j)] = r * a * wu;
            }
            out[self.out(j)] = r * pre.max(0.0);
        }
        out[self.bias()] = r;
        out
    }

    /// Parameters reproducing the unnormalized network
    /// `Σ_j a_j relu(⟨v_j, u⟩) + c`, with `w_j = v_j/‖v_j‖`, `g_j = ‖v_j‖`.
    pub fn normalize(&self, v: &[Vector], a: &[f64], c: f64) -> Result<Vector> {
        if v.len() != self.d1 || a.len() != self.d1 {
            return Err(Error::invalid("expected one weight vector and output weight per hidden unit"));
        }
        let mut x = Vector::zeros(self.len());
        for (j, vj) in v.iter().enumerate() {
            let n = vj.norm();
            if n == 0.0 {
                return Err(Error::invalid("zero weight vector has no direction"));
            }
            x.rows_mut(j * self.d0, self.d0).copy_from(&(vj / n));
            x[self.scale(j)] = n;
            x[self.out(j)] = a[j];
        }
        x[self.bias()] = c;
        Ok(x)
    }
}

/// `Σ_j a_j relu(⟨v_j, u⟩) + c`.
pub fn unnormalized_output(v: &[Vector], a: &[f64], c: f64, u: &Vector) -> f64 {
    c + v.iter().zip(a).map(|(vj, aj)| aj * vj.dot(u).max(0.0)).sum::<f64>()
}

fn weight_norm(p: &Params) -> Result<Problem> {
    let d0 = p.usize("d0")?;
    let d1 = p.usize("d1")?;
    let m = Manifold::product_sphere_euclid(d0, d1)?;
    let layout = WeightNormLayout { d0, d1 };
    let count = p.atoms(p.usize("m")?);
    if count == 0 {
        return Err(Error::invalid("need at least one training pair"));
    }
    let seed = p.u64("seed")?;
    let mut rng = rng::stream(seed, 0);
    let mut gauss = |n: usize| Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let teacher = m.project_point(&gauss(layout.len()))?;
    let inputs: Vec<Vector> = (0..count).map(|_| gauss(d0)).collect();
    let targets: Vec<f64> = inputs.iter().map(|u| layout.output(&teacher, u)).collect();
    let start = gauss(layout.len());
    let comps = inputs
        .into_iter()
        .zip(targets)
        .map(|(u, y)| {
            let u = Arc::new(u);
            let u2 = u.clone();
            Component {
                value: Arc::new(move |x: &Vector| 0.5 * (layout.output(x, &u) - y).powi(2)),
                gradient: Arc::new(move |x: &Vector| layout.loss_gradient(x, &u2, y)),
                hvp: None,
            }
        })
        .collect();
    let space = p.space(count)?;
    let obj = StochasticObjective::from_components(m, "weight_norm", space, comps)?;
    finish(p.spec, obj, start, TestFunction::coordinate(layout.bias()), Some((teacher, 0.0)))
}

// Hyperbolic Fréchet mean.

/// `h(s) = ½ arccosh(s)²` with its first two derivatives, series-expanded
/// near `s = 1`.
fn half_sq_arccosh(s: f64) -> (f64, f64, f64) {
    let u = s - 1.0;
    if u.abs() < 1e-4 {
        return (
            u - u * u / 6.0 + 2.0 * u.powi(3) / 45.0,
            1.0 - u / 3.0 + 2.0 * u * u / 15.0 - 4.0 * u.powi(3) / 35.0,
            -1.0 / 3.0 + 4.0 * u / 15.0 - 12.0 * u * u / 35.0,
        );
    }
    let a = s.max(1.0).acosh();
    let q = s * s - 1.0;
    let d1 = a / q.sqrt();
    (0.5 * a * a, d1, (1.0 - s * d1) / q)
}

fn hyperbolic_component(pt: Vector) -> Component {
    // s(x) = −⟨x, p⟩ has Euclidean gradient ds = (p₀, −p₁, ..., −p_d).
    let mut ds = -pt.clone();
    ds[0] = pt[0];
    let ds = Arc::new(ds);
    let (d1, d2, d3) = (ds.clone(), ds.clone(), ds.clone());
    Component {
        value: Arc::new(move |x: &Vector| half_sq_arccosh(d1.dot(x)).0),
        gradient: Arc::new(move |x: &Vector| &*d2 * half_sq_arccosh(d2.dot(x)).1),
        hvp: Some(Arc::new(move |x: &Vector, v: &Vector| {
            &*d3 * (half_sq_arccosh(d3.dot(x)).2 * d3.dot(v))
        })),
    }
}

fn hyperbolic_mean(p: &Params) -> Result<Problem> {
    let d = p.usize("d")?;
    let m = Manifold::hyperboloid(d)?;
    let count = p.atoms(p.usize("m")?);
    if count == 0 {
        return Err(Error::invalid("need at least one data point"));
    }
    let spread = p.f64("spread")?;
    let mut rng = rng::stream(p.u64("seed")?, 0);
    let points: Vec<Vector> = (0..count)
        .map(|_| {
            let mut z = Vector::from_fn(d + 1, |_, _| spread * rng.sample::<f64, _>(StandardNormal));
            z[0] = 0.0;
            z[0] = (1.0 + z.norm_squared()).sqrt();
            z
        })
        .collect();
    let space = p.space(count)?;
    let comps = points.into_iter().map(hyperbolic_component).collect();
    let obj = StochasticObjective::from_components(m, "hyperbolic_mean", space, comps)?;
    let mut origin = Vector::zeros(d + 1);
    origin[0] = 1.0;
    finish(p.spec, obj, origin, TestFunction::coordinate(1), None)
}

// Fisher half-plane.

fn kl_component(mi: f64, si: f64) -> Component {
    let q = move |x: &Vector| si * si + (mi - x[0]).powi(2);
    Component {
        value: Arc::new(move |x: &Vector| (x[1] / si).ln() + q(x) / (2.0 * x[1] * x[1]) - 0.5),
        gradient: Arc::new(move |x: &Vector| {
            let s = x[1];
            v(&[(x[0] - mi) / (s * s), 1.0 / s - q(x) / s.powi(3)])
        }),
        hvp: Some(Arc::new(move |x: &Vector, d: &Vector| {
            let s = x[1];
            let h11 = 1.0 / (s * s);
            let h12 = -2.0 * (x[0] - mi) / s.powi(3);
            let h22 = -1.0 / (s * s) + 3.0 * q(x) / s.powi(4);
            v(&[h11 * d[0] + h12 * d[1], h12 * d[0] + h22 * d[1]])
        })),
    }
}

fn fisher_kl(p: &Params) -> Result<Problem> {
    let means = p.vec("means")?;
    let stds = p.vec("stds")?;
    if means.len() != stds.len() || means.is_empty() {
        return Err(Error::invalid("means and stds must be non-empty and of equal length"));
    }
    if let Some(a) = p.spec.atoms {
        if a != means.len() {
            return Err(Error::invalid(format!("{a} atoms for {} target normals", means.len())));
        }
    }
    if stds.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("target standard deviations must be positive"));
    }
    let space = p.space(means.len())?;
    let w = space.weights().to_vec();
    let mu: f64 = w.iter().zip(&means).map(|(w, m)| w * m).sum();
    let var: f64 = w
        .iter()
        .zip(means.iter().zip(&stds))
        .map(|(w, (m, s))| w * (s * s + (m - mu).powi(2)))
        .sum();
    let comps = means.iter().zip(&stds).map(|(m, s)| kl_component(*m, *s)).collect();
    let obj = StochasticObjective::from_components(Manifold::fisher_half_plane(), "fisher_kl", space, comps)?;
    let opt = v(&[mu, var.sqrt()]);
    let f_opt = obj.value(&opt);
    let x0 = v(&[p.f64("mu0")?, p.f64("sigma0")?]);
    if !(x0[1] > 0.0) {
        return Err(Error::invalid("sigma0 must be positive"));
    }
    finish(p.spec, obj, x0, TestFunction::coordinate(0), Some((opt, f_opt)))
}

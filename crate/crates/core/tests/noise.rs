use nalgebra::DMatrix;
use rsmf_core::geometry::sampling::random_point;
use rsmf_core::problems::{default_problem, ProblemName};
use rsmf_core::rng::stream;

#[test]
fn atoms_are_unbiased_everywhere() {
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let m = p.objective.manifold();
        let mut rng = stream(31, 0);
        for _ in 0..1000 {
            let x = random_point(m, &mut rng);
            let scale = 1.0 + p.objective.grad_at(x.coords()).norm();
            let r = p.objective.unbiasedness_residual(x.coords());
            assert!(r <= 1e-10 * scale, "{name}: {r}");
        }
    }
}

#[test]
fn diffusion_covariance_is_the_atom_covariance() {
    let eta = 0.07;
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let obj = &p.objective;
        let mut rng = stream(32, 0);
        for _ in 0..50 {
            let x = random_point(obj.manifold(), &mut rng);
            let xc = x.coords();
            let n = xc.len();
            let mut from_sigma = DMatrix::zeros(n, n);
            for s in obj.diffusion_vectors_at(xc, eta) {
                from_sigma += &s * s.transpose();
            }
            let g = obj.grad_at(xc);
            let mut second = DMatrix::zeros(n, n);
            for (i, w) in obj.space().weights().iter().enumerate() {
                let a = obj.atom_at(xc, i);
                second += &a * a.transpose() * *w;
            }
            let expected = (second - &g * g.transpose()) * eta;
            let err = (&from_sigma - &expected).amax();
            assert!(err <= 1e-10 * (1.0 + expected.amax()), "{name}: {err}");
        }
    }
}

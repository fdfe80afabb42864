//! Stiefel manifold St(r, n) with the metric induced by the Frobenius inner
//! product. Points are column-major n×r matrices flattened into vectors.

use nalgebra::DMatrix;

use super::Vector;
use crate::error::{Error, Result};

/// Smallest singular value below which the polar factor is not unique.
pub const MIN_SINGULAR_VALUE: f64 = 1e-8;

/// Parameter step (in units of arc length) for the geodesic and transport ODEs.
pub const ODE_ARC_STEP: f64 = 1e-3;

pub(crate) fn to_mat(x: &Vector, n: usize, r: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, r, x.as_slice())
}

pub(crate) fn to_vec(m: &DMatrix<f64>) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// `P_B(Z) = ½ B (BᵀZ − ZᵀB) + (I − BBᵀ) Z = Z − ½ B (BᵀZ + ZᵀB)`.
pub(crate) fn project_tangent(b: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let btz = b.transpose() * z;
    let sym = &btz + btz.transpose();
    z - b * sym * 0.5
}

/// `d/dt P_{B+tV}(Z)` at `t = 0`.
pub(crate) fn project_tangent_derivative(
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> DMatrix<f64> {
    let btz = b.transpose() * z;
    let vtz = v.transpose() * z;
    let s1 = &btz + btz.transpose();
    let s2 = &vtz + vtz.transpose();
    -(v * s1 + b * s2) * 0.5
}

/// Polar factor `U Vᵀ` of the thin SVD, the nearest point in Frobenius norm.
pub(crate) fn polar(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = z.clone().svd(true, true);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin >= MIN_SINGULAR_VALUE) {
        return Err(Error::tube(format!(
            "smallest singular value {smin:.3e} below {MIN_SINGULAR_VALUE:.0e}"
        )));
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    Ok(u * vt)
}

pub(crate) fn residual(b: &DMatrix<f64>) -> f64 {
    let r = b.ncols();
    (b.transpose() * b - DMatrix::identity(r, r)).norm()
}

fn steps_for(len: f64) -> usize {
    ((len / ODE_ARC_STEP).ceil() as usize).max(4)
}

/// Geodesic acceleration for the induced metric: `Ÿ = −Y (ẎᵀẎ)`.
fn accel(y: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    -(y * (v.transpose() * v))
}

/// Transport equation along a curve with velocity `V`:
/// `Ẇ = −½ Y (VᵀW + WᵀV)`, i.e. the derivative of `W` is normal.
fn transport_rate(y: &DMatrix<f64>, v: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let vtw = v.transpose() * w;
    -(y * (&vtw + vtw.transpose())) * 0.5
}

/// Integrates the geodesic ODE and, optionally, the transport ODE for `w`
/// with classical RK4.
pub(crate) fn geodesic(
    y0: &DMatrix<f64>,
    v0: &DMatrix<f64>,
    w0: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DMatrix<f64>, Option<DMatrix<f64>>) {
    let steps = steps_for(v0.norm());
    let h = 1.0 / steps as f64;
    let mut y = y0.clone();
    let mut v = v0.clone();
    let mut w = w0.cloned();
    for _ in 0..steps {
        let k1y = v.clone();
        let k1v = accel(&y, &v);
        let k1w = w.as_ref().map(|w| transport_rate(&y, &v, w));

        let y2 = &y + &k1y * (0.5 * h);
        let v2 = &v + &k1v * (0.5 * h);
        let w2 = w.as_ref().zip(k1w.as_ref()).map(|(w, k)| w + k * (0.5 * h));
        let k2y = v2.clone();
        let k2v = accel(&y2, &v2);
        let k2w = w2.as_ref().map(|w| transport_rate(&y2, &v2, w));

        let y3 = &y + &k2y * (0.5 * h);
        let v3 = &v + &k2v * (0.5 * h);
        let w3 = w.as_ref().zip(k2w.as_ref()).map(|(w, k)| w + k * (0.5 * h));
        let k3y = v3.clone();
        let k3v = accel(&y3, &v3);
        let k3w = w3.as_ref().map(|w| transport_rate(&y3, &v3, w));

        let y4 = &y + &k3y * h;
        let v4 = &v + &k3v * h;
        let w4 = w.as_ref().zip(k3w.as_ref()).map(|(w, k)| w + k * h);
        let k4y = v4.clone();
        let k4v = accel(&y4, &v4);
        let k4w = w4.as_ref().map(|w| transport_rate(&y4, &v4, w));

        y += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        if let Some(w) = w.as_mut() {
            let (k1, k2, k3, k4) = (
                k1w.unwrap(),
                k2w.unwrap(),
                k3w.unwrap(),
                k4w.unwrap(),
            );
            *w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    (y, v, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_projection_formula_is_not_tangent_but_ours_is() {
        let b = DMatrix::<f64>::identity(2, 2);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let ours = project_tangent(&b, &z);
        let t = b.transpose() * &ours;
        assert!((&t + t.transpose()).norm() < 1e-14);
        // Z-on-the-left variant: ½ Z (BᵀZ − ZᵀB) + (I − BBᵀ)Z.
        let printed = &z * (b.transpose() * &z - z.transpose() * &b) * 0.5;
        let tp = b.transpose() * &printed;
        assert!((&tp + tp.transpose()).norm() > 1.0);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(polar(&z), Err(Error::TubeViolation(_))));
    }
}

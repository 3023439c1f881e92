//! 3×3 singular value decomposition for the stress kernel.
//!
//! Cyclic Jacobi on the normal matrix `FᵀF` gives `V` and the squared
//! singular values; Givens QR of `F V` then yields `U` and the signed
//! singular values without ever dividing by a small singular value, which
//! keeps near-degenerate inputs well behaved.

use nalgebra::{Matrix3, Vector3};

const MAX_SWEEPS: usize = 20;
const OFF_DIAGONAL_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Svd3 {
    /// Proper rotation.
    pub u: Matrix3<f64>,
    /// Singular values, descending in magnitude; the last one carries the
    /// sign of `det F`.
    pub sigma: Vector3<f64>,
    /// Proper rotation.
    pub v: Matrix3<f64>,
}

/// `F = U diag(σ) Vᵀ` with `U`, `V` rotations. Returns `None` if Jacobi
/// fails to converge or the input is not finite.
pub fn svd3(f: &Matrix3<f64>) -> Option<Svd3> {
    if !f.iter().all(|x| x.is_finite()) {
        return None;
    }
    let mut a = f.transpose() * f;
    let mut v = Matrix3::identity();
    let scale = a.diagonal().iter().map(|x| x.abs()).fold(0.0, f64::max);
    // the off-diagonal floor after a rotation is a few ulps of the scale
    let tol = (OFF_DIAGONAL_TOL * scale).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off <= tol {
            converged = true;
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            jacobi_rotate(&mut a, &mut v, p, q);
        }
    }
    if !converged {
        return None;
    }

    // order by eigenvalue, descending
    let mut order = [0usize, 1, 2];
    let ev = a.diagonal();
    order.sort_by(|&i, &j| ev[j].total_cmp(&ev[i]));
    let mut sorted = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &v.column(src));
    }
    let mut v = sorted;
    if v.determinant() < 0.0 {
        v.column_mut(2).neg_mut();
    }

    // B = F V = U R, R upper triangular with diag(R) = σ
    let mut r = f * v;
    let mut u = Matrix3::identity();
    for (p, q) in [(0, 1), (0, 2), (1, 2)] {
        // zero r[(q, p)] using rows p and q
        let (x, y) = (r[(p, p)], r[(q, p)]);
        let h = x.hypot(y);
        if h == 0.0 {
            continue;
        }
        let (c, s) = (x / h, y / h);
        for k in 0..3 {
            let (rp, rq) = (r[(p, k)], r[(q, k)]);
            r[(p, k)] = c * rp + s * rq;
            r[(q, k)] = -s * rp + c * rq;
            let (up, uq) = (u[(k, p)], u[(k, q)]);
            u[(k, p)] = c * up + s * uq;
            u[(k, q)] = -s * up + c * uq;
        }
    }
    Some(Svd3 {
        u,
        sigma: Vector3::new(r[(0, 0)], r[(1, 1)], r[(2, 2)]),
        v,
    })
}

#[inline]
fn jacobi_rotate(a: &mut Matrix3<f64>, v: &mut Matrix3<f64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // A ← Jᵀ A J
    for k in 0..3 {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..3 {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..3 {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check(f: &Matrix3<f64>) {
        let d = svd3(f).expect("converges");
        let recon = d.u * Matrix3::from_diagonal(&d.sigma) * d.v.transpose();
        let scale = f.abs().max().max(1e-300);
        assert!((recon - f).abs().max() <= 1e-12 * scale, "{f} vs {recon}");
        for m in [d.u, d.v] {
            assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
        // magnitudes agree with the library SVD
        let mut lib: Vec<f64> = f.singular_values().iter().copied().collect();
        lib.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in d.sigma.iter().zip(&lib) {
            assert!((a.abs() - b).abs() <= 1e-10 * scale, "{:?} vs {lib:?}", d.sigma);
        }
    }

    #[test]
    fn special_inputs() {
        check(&Matrix3::identity());
        check(&Matrix3::zeros());
        check(&Matrix3::from_diagonal(&Vector3::new(0.9, 1.0, 1.0)));
        check(&Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)));
        check(&Matrix3::from_diagonal(&Vector3::new(2.0, 1e-9, 1.0)));
        // rank one
        check(&(Vector3::new(1.0, 2.0, 3.0) * Vector3::new(-1.0, 0.5, 0.2).transpose()));
        assert!(svd3(&Matrix3::from_element(f64::NAN)).is_none());
    }

    #[test]
    fn reflection_goes_to_last_value() {
        let f = Matrix3::from_diagonal(&Vector3::new(1.0, -2.0, 3.0));
        let d = svd3(&f).unwrap();
        assert!(d.sigma[0] > 0.0 && d.sigma[1] > 0.0 && d.sigma[2] < 0.0);
    }

    proptest! {
        #[test]
        fn random_matrices(e in proptest::array::uniform9(-2.0f64..2.0)) {
            check(&Matrix3::from_row_slice(&e));
        }

        #[test]
        fn near_rotations(e in proptest::array::uniform9(-0.05f64..0.05), angle in -3.1f64..3.1) {
            let r = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), angle);
            check(&(r.matrix() * (Matrix3::identity() + Matrix3::from_row_slice(&e))));
        }
    }
}

//! Fixed-corotated hyperelasticity.

use nalgebra::Matrix3;

use super::svd::svd3;
use super::MaterialParams;
use crate::error::{Error, Result};

/// Rotation factor `R` of the polar decomposition `F = R S`.
///
/// Computed from the SVD `F = U Σ Vᵀ` as `R = U Vᵀ`. Both factors are
/// proper rotations, with any reflection carried by the sign of the
/// smallest singular value, so `R` is never a reflection.
pub fn polar_rotation(f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let d = svd3(f).ok_or(Error::DegenerateF { det: f.determinant() })?;
    Ok(d.u * d.v.transpose())
}

/// Stress term `S = P(F) Fᵀ` with the fixed-corotated first Piola–Kirchhoff
/// stress `P(F) = 2μ(F − R) + λ(J − 1) J F⁻ᵀ`.
///
/// Since `J F⁻ᵀ Fᵀ = J I` the volumetric part needs no inverse.
pub fn compute_stress(f: &Matrix3<f64>, material: &MaterialParams) -> Result<Matrix3<f64>> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::DegenerateF { det: j });
    }
    let r = polar_rotation(f)?;
    let (mu, lambda) = material.lame();
    Ok((f - r) * f.transpose() * (2.0 * mu)
        + Matrix3::identity() * (lambda * (j - 1.0) * j))
}

//! Quadratic B-spline interpolation over the 3×3×3 node neighbourhood.

use nalgebra::Vector3;

use super::Grid;
use crate::error::{Error, Result};

/// Per-axis weights of a particle's 3×3×3 stencil.
///
/// `base` is the lowest node index of the neighbourhood on each axis and
/// `axis[d][a]` is the 1-D weight of node `base[d] + a` along axis `d`.
/// The 3-D weight of node `base + (a, b, c)` is the tensor product
/// `axis[0][a] * axis[1][b] * axis[2][c]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub base: [usize; 3],
    pub axis: [[f64; 3]; 3],
    /// Particle position in grid units relative to node `base`.
    pub frac: [f64; 3],
}

impl Stencil {
    #[inline]
    pub fn weight(&self, a: usize, b: usize, c: usize) -> f64 {
        self.axis[0][a] * self.axis[1][b] * self.axis[2][c]
    }

    /// The full 27-entry weight array, indexed `[a][b][c]`.
    pub fn tensor(&self) -> [[[f64; 3]; 3]; 3] {
        let mut out = [[[0.0; 3]; 3]; 3];
        for (a, plane) in out.iter_mut().enumerate() {
            for (b, row) in plane.iter_mut().enumerate() {
                for (c, w) in row.iter_mut().enumerate() {
                    *w = self.weight(a, b, c);
                }
            }
        }
        out
    }

    /// Gradient of the weight of node `(a, b, c)` with respect to the node
    /// position, per metre.
    #[inline]
    pub fn weight_gradient(&self, a: usize, b: usize, c: usize, spacing: f64) -> Vector3<f64> {
        let g = [
            quadratic_gradients(self.frac[0]),
            quadratic_gradients(self.frac[1]),
            quadratic_gradients(self.frac[2]),
        ];
        let w = &self.axis;
        Vector3::new(
            g[0][a] * w[1][b] * w[2][c],
            w[0][a] * g[1][b] * w[2][c],
            w[0][a] * w[1][b] * g[2][c],
        ) / spacing
    }

    /// Offset `X_node - x_p` in metres for stencil node `(a, b, c)`.
    #[inline]
    pub fn offset(&self, a: usize, b: usize, c: usize, spacing: f64) -> Vector3<f64> {
        Vector3::new(
            (a as f64 - self.frac[0]) * spacing,
            (b as f64 - self.frac[1]) * spacing,
            (c as f64 - self.frac[2]) * spacing,
        )
    }
}

/// 1-D quadratic B-spline weights for a particle at `fx` grid units past
/// the stencil base, `fx` in `[0.5, 1.5)`.
#[inline]
pub fn quadratic_weights(fx: f64) -> [f64; 3] {
    let d0 = 1.5 - fx;
    let d1 = fx - 1.0;
    let d2 = fx - 0.5;
    [0.5 * d0 * d0, 0.75 - d1 * d1, 0.5 * d2 * d2]
}

/// Derivatives of [`quadratic_weights`] with respect to the node
/// coordinate, in grid units. They sum to zero.
#[inline]
pub fn quadratic_gradients(fx: f64) -> [f64; 3] {
    [1.5 - fx, 2.0 * (fx - 1.0), 0.5 - fx]
}

/// Stencil of the particle at `position`. The base index on each axis is
/// `floor(x / dx - 0.5)` in the grid frame.
pub fn bspline_weights(position: &Vector3<f64>, grid: &Grid) -> Result<Stencil> {
    stencil_at(position, &grid.origin, grid.spacing, grid.resolution).ok_or(Error::OutOfGrid {
        index: usize::MAX,
        position: [position.x, position.y, position.z],
    })
}

#[inline]
pub(crate) fn stencil_at(
    position: &Vector3<f64>,
    origin: &Vector3<f64>,
    spacing: f64,
    resolution: [usize; 3],
) -> Option<Stencil> {
    let inv_dx = 1.0 / spacing;
    let mut base = [0usize; 3];
    let mut axis = [[0.0; 3]; 3];
    let mut frac = [0.0; 3];
    for d in 0..3 {
        let local = (position[d] - origin[d]) * inv_dx;
        let b = (local - 0.5).floor();
        if !(b >= 0.0 && b + 2.0 <= (resolution[d] - 1) as f64) {
            return None;
        }
        base[d] = b as usize;
        frac[d] = local - b;
        axis[d] = quadratic_weights(frac[d]);
    }
    Some(Stencil { base, axis, frac })
}

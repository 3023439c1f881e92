//! Particle-to-grid scatter and grid-to-particle gather.
//!
//! The scatter is race-free without atomics: particles are binned into
//! slabs of [`SLAB`] node layers along x by their stencil base. A particle
//! in slab `s` writes only x-layers `[s·SLAB, s·SLAB + SLAB + 2)`, so slabs
//! of equal parity own disjoint node ranges and run in parallel. Within a
//! slab particles are visited in index order, which makes every node's
//! accumulation order independent of the thread count.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::kernel::{stencil_at, Stencil};
use super::stress::compute_stress;
use super::{Node, NodeBox, SimState, Tag};
use crate::error::{Error, Result};

const SLAB: usize = 4;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Contribution {
    stencil: Stencil,
    position: Vector3<f64>,
    normal: Vector3<f64>,
    rigid: bool,
    mass: f64,
    momentum: Vector3<f64>,
    /// `m_p C_p - Δt (4/ΔX²) V⁰_p S_p`
    affine: Matrix3<f64>,
}

impl Default for Contribution {
    fn default() -> Self {
        Contribution {
            stencil: Stencil {
                base: [0; 3],
                axis: [[0.0; 3]; 3],
                frac: [0.0; 3],
            },
            position: Vector3::zeros(),
            normal: Vector3::zeros(),
            rigid: false,
            mass: 0.0,
            momentum: Vector3::zeros(),
            affine: Matrix3::zeros(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Scratch {
    contributions: Vec<Contribution>,
    order: Vec<u32>,
    slab_start: Vec<usize>,
}

impl SimState {
    /// Scatters particle mass and momentum (motion plus elastic impulse)
    /// onto the grid. The grid must have been cleared.
    pub fn particle_to_grid(&mut self) -> Result<()> {
        let grid = &mut self.grid;
        let spacing = grid.spacing;
        let origin = grid.origin;
        let resolution = grid.resolution;
        let impulse = -self.dt * 4.0 / (spacing * spacing);
        let material = self.material;

        let scratch = &mut self.scratch;
        scratch
            .contributions
            .resize(self.particles.len(), Contribution::default());
        scratch
            .contributions
            .par_iter_mut()
            .zip(self.particles.par_iter())
            .enumerate()
            .try_for_each(|(index, (out, p))| {
                let stencil =
                    stencil_at(&p.position, &origin, spacing, resolution).ok_or(Error::OutOfGrid {
                        index,
                        position: [p.position.x, p.position.y, p.position.z],
                    })?;
                let mut affine = p.affine * p.mass;
                if p.tag != Tag::Indenter {
                    affine += compute_stress(&p.deformation, &material)? * (impulse * p.rest_volume);
                }
                *out = Contribution {
                    stencil,
                    position: p.position,
                    normal: p.normal,
                    rigid: p.tag == Tag::Indenter,
                    mass: p.mass,
                    momentum: p.velocity * p.mass,
                    affine,
                };
                Ok::<_, Error>(())
            })?;

        // active node box
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for c in &scratch.contributions {
            for d in 0..3 {
                lo[d] = lo[d].min(c.stencil.base[d]);
                hi[d] = hi[d].max(c.stencil.base[d] + 2);
            }
        }
        if scratch.contributions.is_empty() {
            return Ok(());
        }

        // stable counting sort by slab
        let n_slabs = resolution[0].div_ceil(SLAB);
        scratch.slab_start.clear();
        scratch.slab_start.resize(n_slabs + 1, 0);
        for c in &scratch.contributions {
            scratch.slab_start[c.stencil.base[0] / SLAB + 1] += 1;
        }
        for s in 0..n_slabs {
            scratch.slab_start[s + 1] += scratch.slab_start[s];
        }
        scratch.order.resize(scratch.contributions.len(), 0);
        let mut cursor = scratch.slab_start.clone();
        for (i, c) in scratch.contributions.iter().enumerate() {
            let s = c.stencil.base[0] / SLAB;
            scratch.order[cursor[s]] = i as u32;
            cursor[s] += 1;
        }

        let [nx, ny, nz] = resolution;
        let plane = ny * nz;
        let contributions = &scratch.contributions;
        let order = &scratch.order;
        let slab_start = &scratch.slab_start;
        for parity in 0..2 {
            let slabs: Vec<usize> = (parity..n_slabs)
                .step_by(2)
                .filter(|&s| slab_start[s + 1] > slab_start[s])
                .collect();
            let ranges: Vec<(usize, usize)> = slabs
                .iter()
                .map(|&s| (s * SLAB * plane, ((s * SLAB + SLAB + 2).min(nx)) * plane))
                .collect();
            let chunks = split_disjoint(&mut grid.nodes, &ranges);
            chunks
                .into_par_iter()
                .zip(slabs.par_iter())
                .for_each(|(chunk, &s)| {
                    let x0 = s * SLAB;
                    for &pi in &order[slab_start[s]..slab_start[s + 1]] {
                        scatter(chunk, &contributions[pi as usize], x0, ny, nz, spacing);
                    }
                });
        }
        grid.touched = Some(NodeBox { lo, hi });
        Ok(())
    }

    /// Gathers velocity, affine velocity and the updated deformation
    /// gradient for every elastomer particle. Indenter particles are
    /// overwritten by the boundary rule and skip the gather.
    pub fn grid_to_particle(&mut self) -> Result<()> {
        let grid = &self.grid;
        let spacing = grid.spacing;
        let scale = 4.0 / (spacing * spacing);
        let dt = self.dt;
        self.particles[..self.elastomer_len]
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(index, p)| {
                let s = stencil_at(&p.position, &grid.origin, spacing, grid.resolution).ok_or(
                    Error::OutOfGrid {
                        index,
                        position: [p.position.x, p.position.y, p.position.z],
                    },
                )?;
                let mut v = Vector3::zeros();
                let mut b = Matrix3::zeros();
                for a in 0..3 {
                    for bb in 0..3 {
                        let row = grid.index(s.base[0] + a, s.base[1] + bb, s.base[2]);
                        let wxy = s.axis[0][a] * s.axis[1][bb];
                        for c in 0..3 {
                            let w = wxy * s.axis[2][c];
                            let wv = grid.nodes[row + c].velocity * w;
                            v += wv;
                            b += wv * s.offset(a, bb, c, spacing).transpose();
                        }
                    }
                }
                p.velocity = v;
                p.affine = b * scale;
                p.deformation = (Matrix3::identity() + p.affine * dt) * p.deformation;
                Ok(())
            })
    }
}

#[inline]
fn scatter(chunk: &mut [Node], c: &Contribution, x0: usize, ny: usize, nz: usize, spacing: f64) {
    let s = &c.stencil;
    for a in 0..3 {
        let wx = s.axis[0][a];
        let layer = (s.base[0] + a - x0) * ny;
        for b in 0..3 {
            let wxy = wx * s.axis[1][b];
            let row = (layer + s.base[1] + b) * nz + s.base[2];
            for k in 0..3 {
                let w = wxy * s.axis[2][k];
                let node = &mut chunk[row + k];
                let wm = w * c.mass;
                let dp = (c.momentum + c.affine * s.offset(a, b, k, spacing)) * w;
                node.mass += wm;
                node.momentum += dp;
                if c.rigid {
                    node.rigid_mass += wm;
                    node.rigid_momentum += dp;
                    node.rigid_normal += c.normal * wm;
                    node.rigid_moment += c.position * wm;
                } else {
                    node.elastic_moment += c.position * wm;
                }
            }
        }
    }
}

/// Splits `nodes` into the given sorted, non-overlapping ranges.
fn split_disjoint<'a>(nodes: &'a mut [Node], ranges: &[(usize, usize)]) -> Vec<&'a mut [Node]> {
    let mut out = Vec::with_capacity(ranges.len());
    let mut rest = nodes;
    let mut offset = 0;
    for &(start, end) in ranges {
        let tail = std::mem::take(&mut rest);
        let (_, tail) = tail.split_at_mut(start - offset);
        let (mid, tail) = tail.split_at_mut(end - start);
        out.push(mid);
        rest = tail;
        offset = end;
    }
    out
}

//! Material Point Method core: particle and grid state, transfers and the
//! explicit time step.

pub mod kernel;
pub mod stress;
pub mod svd;
mod transfer;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ParticleSet;

pub use kernel::{bspline_weights, Stencil};
pub use stress::{compute_stress, polar_rotation};

/// Required grid margin around the particles at initialization, in node spacings.
pub const INIT_MARGIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Elastomer,
    ElastomerBottom,
    Indenter,
}

impl Tag {
    pub fn is_elastomer(self) -> bool {
        !matches!(self, Tag::Indenter)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// APIC affine velocity matrix `C_p`.
    pub affine: Matrix3<f64>,
    /// Deformation gradient `F_p`.
    pub deformation: Matrix3<f64>,
    pub mass: f64,
    pub rest_volume: f64,
    pub tag: Tag,
    /// Outward surface normal. Used on indenter particles only.
    pub normal: Vector3<f64>,
}

impl Particle {
    pub fn at_rest(position: Vector3<f64>, mass: f64, rest_volume: f64, tag: Tag) -> Self {
        Particle {
            position,
            velocity: Vector3::zeros(),
            affine: Matrix3::zeros(),
            deformation: Matrix3::identity(),
            mass,
            rest_volume,
            tag,
            normal: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

impl MaterialParams {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, density: f64) -> Result<Self> {
        let m = MaterialParams {
            youngs_modulus,
            poisson_ratio,
            density,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) {
            return Err(Error::Config(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Config(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.density > 0.0) {
            return Err(Error::Config(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        Ok(())
    }

    /// Lamé parameters `(μ, λ)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }

    /// `√(E/ρ)`, the wave speed used by the timestep guard.
    pub fn guard_wave_speed(&self) -> f64 {
        (self.youngs_modulus / self.density).sqrt()
    }

    /// Dilatational wave speed `√((λ + 2μ)/ρ)`.
    pub fn p_wave_speed(&self) -> f64 {
        let (mu, lambda) = self.lame();
        ((lambda + 2.0 * mu) / self.density).sqrt()
    }

    /// Largest timestep accepted for node spacing `dx`: `0.5·dx/√(E/ρ)`.
    pub fn max_stable_dt(&self, dx: f64) -> f64 {
        0.5 * dx / self.guard_wave_speed()
    }
}

/// Grid node accumulators. `mass` and `momentum` sum over every
/// particle; the `rigid_*` fields hold the indenter's share, and the two
/// moments locate each body's material near the node for contact.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[repr(C)]
pub struct Node {
    pub mass: f64,
    pub momentum: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub rigid_mass: f64,
    pub rigid_momentum: Vector3<f64>,
    /// `Σ w_ip m_p n_p` over indenter particles, from their outward normals.
    pub rigid_normal: Vector3<f64>,
    /// `Σ w_ip m_p x_p` over indenter particles.
    pub rigid_moment: Vector3<f64>,
    /// `Σ w_ip m_p x_p` over elastomer particles.
    pub elastic_moment: Vector3<f64>,
}

impl Node {
    /// Elastomer mass below this fraction of the node mass counts as none.
    const EMPTY: f64 = 1e-9;

    pub fn elastic_mass(&self) -> f64 {
        let m = self.mass - self.rigid_mass;
        if m > Self::EMPTY * self.mass {
            m
        } else {
            0.0
        }
    }
}

/// How elastomer and indenter interact on shared nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContactModel {
    /// Nodes carry the mass-weighted mean velocity of both bodies.
    Shared,
    /// The indenter acts as a rigid collider. The contact normal at a node
    /// is the weighted mean of the indenter's outward point normals, which
    /// stays consistent on both sides of a thin sheet. Where the elastomer moves
    /// toward the indenter and its material centre on the node lies less
    /// than `gap` node spacings beyond the indenter's along that normal,
    /// the node takes the indenter velocity; otherwise it carries the
    /// elastomer's own velocity, so separation is free.
    Collider { gap: f64 },
}

impl Default for ContactModel {
    fn default() -> Self {
        ContactModel::Collider { gap: 0.25 }
    }
}

/// Inclusive box of node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

/// Fixed background lattice. Nodes sit at `origin + index * spacing`
/// and are stored with x as the slowest axis.
#[derive(Clone, Debug)]
pub struct Grid {
    pub resolution: [usize; 3],
    pub spacing: f64,
    pub origin: Vector3<f64>,
    pub nodes: Vec<Node>,
    /// Nodes at or below this height are held at zero velocity.
    pub floor: Option<f64>,
    /// Nodes written by the last particle-to-grid pass; everything else is zero.
    pub(crate) touched: Option<NodeBox>,
}

impl Grid {
    pub fn new(resolution: [usize; 3], spacing: f64, origin: Vector3<f64>) -> Self {
        let n = resolution.iter().product();
        Grid {
            resolution,
            spacing,
            origin,
            nodes: zeroed_nodes(n),
            floor: None,
            touched: None,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution[1] + j) * self.resolution[2] + k
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> &Node {
        &self.nodes[self.index(i, j, k)]
    }

    pub fn node_mut(&mut self, i: usize, j: usize, k: usize) -> &mut Node {
        let idx = self.index(i, j, k);
        &mut self.nodes[idx]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Lowest and highest node positions.
    pub fn extent(&self) -> (Vector3<f64>, Vector3<f64>) {
        let r = &self.resolution;
        let span = Vector3::new(
            (r[0] - 1) as f64,
            (r[1] - 1) as f64,
            (r[2] - 1) as f64,
        ) * self.spacing;
        (self.origin, self.origin + span)
    }

    /// Box of nodes that may be nonzero, if any.
    pub fn active_box(&self) -> Option<NodeBox> {
        self.touched
    }

    /// Zeroes every accumulator.
    pub fn clear(&mut self) {
        if let Some(b) = self.touched.take() {
            let nz = self.resolution[2];
            for i in b.lo[0]..=b.hi[0] {
                for j in b.lo[1]..=b.hi[1] {
                    let row = self.index(i, j, 0);
                    for node in &mut self.nodes[row + b.lo[2]..=row + b.hi[2]] {
                        *node = Node::default();
                    }
                    debug_assert!(b.hi[2] < nz);
                }
            }
        }
    }

    /// `V_i = MG_i / M_i` where `M_i > 0`, zero elsewhere, plus `dt·g`.
    /// Under [`ContactModel::Collider`] nodes shared by both bodies then
    /// take the collider velocity. Finally the normal velocity is removed
    /// on the six domain faces and nodes at or below [`Grid::floor`] are
    /// stopped.
    pub fn update_velocities(&mut self, gravity: &Vector3<f64>, dt: f64, contact: &ContactModel) {
        use rayon::prelude::*;
        let Some(b) = self.touched else { return };
        let [nx, ny, nz] = self.resolution;
        let plane = ny * nz;
        let g = *gravity * dt;
        let threshold = match contact {
            ContactModel::Collider { gap } => Some(gap * self.spacing),
            ContactModel::Shared => None,
        };
        // first layer above the floor
        let free_k = match self.floor {
            Some(f) => (((f - self.origin.z) / self.spacing + 1e-9).floor() + 1.0).max(0.0) as usize,
            None => 0,
        };
        self.nodes[b.lo[0] * plane..(b.hi[0] + 1) * plane]
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(di, layer)| {
                let i = b.lo[0] + di;
                for j in b.lo[1]..=b.hi[1] {
                    for k in b.lo[2]..=b.hi[2] {
                        let node = &mut layer[j * nz + k];
                        if node.mass <= 0.0 || k < free_k {
                            node.velocity = Vector3::zeros();
                            continue;
                        }
                        node.velocity = match threshold {
                            Some(t) if node.rigid_mass > 0.0 => collider_velocity(node, t),
                            _ => node.momentum / node.mass,
                        } + g;
                        if i == 0 || i == nx - 1 {
                            node.velocity.x = 0.0;
                        }
                        if j == 0 || j == ny - 1 {
                            node.velocity.y = 0.0;
                        }
                        if k == 0 || k == nz - 1 {
                            node.velocity.z = 0.0;
                        }
                    }
                }
            });
    }

    pub fn total_mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.mass).sum()
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        self.nodes.iter().map(|n| n.momentum).sum()
    }
}

/// `n` default nodes from zeroed memory, so untouched pages of a large
/// grid are never committed.
fn zeroed_nodes(n: usize) -> Vec<Node> {
    use std::alloc::{alloc_zeroed, handle_alloc_error, Layout};
    if n == 0 {
        return Vec::new();
    }
    let layout = Layout::array::<Node>(n).expect("grid size overflows");
    // SAFETY: `Node` is `repr(C)` and made only of `f64`, for which all-zero
    // bits is `0.0`, so zeroed memory is `n` valid default nodes. The buffer
    // comes from the global allocator with `Node`'s layout and capacity `n`.
    unsafe {
        let ptr = alloc_zeroed(layout) as *mut Node;
        if ptr.is_null() {
            handle_alloc_error(layout);
        }
        Vec::from_raw_parts(ptr, n, n)
    }
}

/// Velocity of a node holding indenter mass under the collider rule.
#[inline]
fn collider_velocity(node: &Node, threshold: f64) -> Vector3<f64> {
    let rigid_velocity = node.rigid_momentum / node.rigid_mass;
    let m = node.elastic_mass();
    if m == 0.0 {
        return rigid_velocity;
    }
    let Some(normal) = node.rigid_normal.try_normalize(1e-300) else {
        return rigid_velocity;
    };
    let elastic_velocity = (node.momentum - node.rigid_momentum) / m;
    let gap = (node.elastic_moment / m - node.rigid_moment / node.rigid_mass).dot(&normal);
    let approach = (rigid_velocity - elastic_velocity).dot(&normal);
    if gap < threshold && approach > 0.0 {
        rigid_velocity
    } else {
        elastic_velocity
    }
}

/// Geometry of the background grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub resolution: [usize; 3],
    pub spacing: f64,
    pub origin: Vector3<f64>,
}

/// Physical and numerical parameters needed to build a [`SimState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsSettings {
    pub material: MaterialParams,
    pub grid: GridSpec,
    pub dt: f64,
    pub fixed_layers: usize,
    pub gravity: Vector3<f64>,
    pub contact: ContactModel,
}

/// Top layer of a lattice-built elastomer, used for depth extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceLattice {
    /// Particle indices, row-major with x fastest: `indices[j * nx + i]`.
    pub indices: Vec<usize>,
    pub counts: [usize; 2],
    /// Reference (undeformed) xy of lattice node `(0, 0)`.
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    /// Undeformed top-surface height `z₀`.
    pub rest_height: f64,
}

#[derive(Clone, Debug)]
pub struct SimState {
    /// Elastomer particles first, then the indenter.
    pub particles: Vec<Particle>,
    pub grid: Grid,
    pub material: MaterialParams,
    pub dt: f64,
    pub step_count: u64,
    pub gravity: Vector3<f64>,
    pub surface: Option<SurfaceLattice>,
    pub contact: ContactModel,
    pub(crate) elastomer_len: usize,
    pub(crate) scratch: transfer::Scratch,
}

/// Builds the simulation state for the given scene.
pub fn init_scene(
    config: &crate::config::SceneConfig,
    elastomer: &ParticleSet,
    indenter: &ParticleSet,
    indenter_velocity: Vector3<f64>,
) -> Result<SimState> {
    SimState::new(&config.physics()?, elastomer, indenter, indenter_velocity)
}

impl SimState {
    pub fn new(
        settings: &PhysicsSettings,
        elastomer: &ParticleSet,
        indenter: &ParticleSet,
        indenter_velocity: Vector3<f64>,
    ) -> Result<Self> {
        if elastomer.is_empty() {
            return Err(Error::EmptyScene("elastomer particle set is empty"));
        }
        if indenter.is_empty() {
            return Err(Error::EmptyScene("indenter particle set is empty"));
        }
        settings.material.validate()?;
        if !(settings.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", settings.dt)));
        }
        let spec = settings.grid;
        if spec.resolution.iter().any(|&r| r < 5) || !(spec.spacing > 0.0) {
            return Err(Error::GridTooSmall(format!(
                "resolution {:?} with spacing {}",
                spec.resolution, spec.spacing
            )));
        }
        let mut grid = Grid::new(spec.resolution, spec.spacing, spec.origin);
        let (lo, hi) = grid.extent();
        let margin = INIT_MARGIN * spec.spacing;
        for set in [elastomer, indenter] {
            let (bmin, bmax) = set.bounds();
            for d in 0..3 {
                if bmin[d] < lo[d] + margin || bmax[d] > hi[d] - margin {
                    return Err(Error::GridTooSmall(format!(
                        "{} spans [{:.6}, {:.6}] on axis {d} but the grid allows [{:.6}, {:.6}]",
                        set.source,
                        bmin[d],
                        bmax[d],
                        lo[d] + margin,
                        hi[d] - margin
                    )));
                }
            }
        }

        let rho = settings.material.density;
        let el_volume = elastomer.volume() / elastomer.len() as f64;
        // a flat sheet has no bounding-box volume; pad every extent to a node spacing
        let in_volume = {
            let (lo, hi) = indenter.bounds();
            (hi - lo).map(|e| e.max(spec.spacing)).product() / indenter.len() as f64
        };
        let mut particles = Vec::with_capacity(elastomer.len() + indenter.len());
        let lattice = elastomer.lattice.as_ref();
        for (idx, x) in elastomer.positions.iter().enumerate() {
            let tag = match lattice {
                Some(l) if l.layer_of(idx) < settings.fixed_layers => Tag::ElastomerBottom,
                _ => Tag::Elastomer,
            };
            particles.push(Particle::at_rest(*x, rho * el_volume, el_volume, tag));
        }
        grid.floor = particles
            .iter()
            .filter(|p| p.tag == Tag::ElastomerBottom)
            .map(|p| p.position.z)
            .reduce(f64::max);
        let estimated;
        let normals = match &indenter.normals {
            Some(n) if n.len() == indenter.len() => n,
            _ => {
                estimated = crate::geometry::estimate_normals(&indenter.positions);
                &estimated
            }
        };
        for (x, n) in indenter.positions.iter().zip(normals) {
            let mut p = Particle::at_rest(*x, rho * in_volume, in_volume, Tag::Indenter);
            p.velocity = indenter_velocity;
            p.normal = *n;
            particles.push(p);
        }

        let surface = lattice.map(|l| {
            let [nx, ny, nz] = l.counts;
            let top = nz - 1;
            SurfaceLattice {
                indices: (0..ny)
                    .flat_map(|j| (0..nx).map(move |i| (top * ny + j) * nx + i))
                    .collect(),
                counts: [nx, ny],
                origin: [l.origin.x, l.origin.y],
                spacing: [l.spacing().x, l.spacing().y],
                rest_height: l.origin.z + l.dims.z,
            }
        });

        Ok(SimState {
            elastomer_len: elastomer.len(),
            particles,
            grid,
            material: settings.material,
            dt: settings.dt,
            step_count: 0,
            gravity: settings.gravity,
            surface,
            contact: settings.contact,
            scratch: Default::default(),
        })
    }

    pub fn elastomer(&self) -> &[Particle] {
        &self.particles[..self.elastomer_len]
    }

    pub fn indenter(&self) -> &[Particle] {
        &self.particles[self.elastomer_len..]
    }

    pub fn indenter_mut(&mut self) -> &mut [Particle] {
        &mut self.particles[self.elastomer_len..]
    }

    /// Lowest indenter z, i.e. the tip height.
    pub fn indenter_tip(&self) -> f64 {
        self.indenter()
            .iter()
            .map(|p| p.position.z)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_det_f(&self) -> f64 {
        self.elastomer()
            .iter()
            .map(|p| p.deformation.determinant())
            .fold(f64::INFINITY, f64::min)
    }

    /// Forces indenter particles to the commanded rigid velocity and
    /// pins the bottom layers.
    pub fn apply_boundary(&mut self, indenter_velocity: &Vector3<f64>) {
        for p in self.particles.iter_mut() {
            match p.tag {
                Tag::Indenter => {
                    p.velocity = *indenter_velocity;
                    p.affine = Matrix3::zeros();
                    p.deformation = Matrix3::identity();
                }
                Tag::ElastomerBottom => p.velocity = Vector3::zeros(),
                Tag::Elastomer => {}
            }
        }
    }

    /// `x ← x + Δt·v` for every particle.
    pub fn advect(&mut self) -> Result<()> {
        use rayon::prelude::*;
        let dt = self.dt;
        let (lo, hi) = self.grid.extent();
        let margin = self.grid.spacing;
        self.particles
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(index, p)| {
                p.position += p.velocity * dt;
                let x = &p.position;
                if (0..3).any(|d| !(x[d] >= lo[d] + margin && x[d] <= hi[d] - margin)) {
                    return Err(Error::OutOfGrid {
                        index,
                        position: [x.x, x.y, x.z],
                    });
                }
                Ok(())
            })?;
        self.step_count += 1;
        Ok(())
    }

    /// One explicit MPM step.
    pub fn step(&mut self, indenter_velocity: &Vector3<f64>) -> Result<()> {
        self.grid.clear();
        self.particle_to_grid()?;
        self.grid.update_velocities(&self.gravity, self.dt, &self.contact);
        self.grid_to_particle()?;
        self.apply_boundary(indenter_velocity);
        self.advect()
    }

    /// `n_substeps` physics steps under one control command.
    pub fn advance(&mut self, indenter_velocity: &Vector3<f64>, n_substeps: usize) -> Result<()> {
        for _ in 0..n_substeps {
            self.step(indenter_velocity)?;
        }
        Ok(())
    }
}

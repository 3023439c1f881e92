#![allow(dead_code)]

pub mod reference;
pub mod shading;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tactile_mpm::geometry::ParticleSet;
use tactile_mpm::mpm::{ContactModel, GridSpec, MaterialParams, PhysicsSettings, SimState, Tag};

pub const DX: f64 = 1e-3;

pub fn settings(n: usize, contact: ContactModel) -> PhysicsSettings {
    let material = MaterialParams::new(1.45e5, 0.45, 1000.0).unwrap();
    PhysicsSettings {
        material,
        grid: GridSpec {
            resolution: [n; 3],
            spacing: DX,
            origin: Vector3::zeros(),
        },
        dt: 0.4 * material.max_stable_dt(DX),
        fixed_layers: 0,
        gravity: Vector3::zeros(),
        contact,
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: [f64; 3], hi: [f64; 3]) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::from_fn(|d, _| rng.gen_range(lo[d]..hi[d])))
        .collect()
}

pub fn small_matrix(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.gen_range(-scale..scale))
}

/// A random two-body scene on an 8³ grid with 1 mm spacing: a block of
/// elastomer particles under an indenter block that overlaps its top.
/// Particles carry random velocities, affine matrices and near-identity
/// deformation gradients; the lowest elastomer particles are pinned and
/// set the grid floor.
pub fn random_scene(seed: u64, elastomer: usize, indenter: usize, contact: ContactModel) -> SimState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let el = ParticleSet::new(
        uniform(&mut rng, elastomer, [2.1e-3, 2.1e-3, 2.1e-3], [4.9e-3, 4.9e-3, 3.9e-3]),
        Tag::Elastomer,
        "block",
    );
    let mut inp = ParticleSet::new(
        uniform(&mut rng, indenter, [2.6e-3, 2.6e-3, 3.5e-3], [4.4e-3, 4.4e-3, 4.9e-3]),
        Tag::Indenter,
        "indenter",
    );
    inp.normals = Some(
        (0..indenter)
            .map(|_| (Vector3::new(0.0, 0.0, -1.0) + Vector3::from_fn(|_, _| rng.gen_range(-0.3..0.3))).normalize())
            .collect(),
    );
    let down = Vector3::new(0.0, 0.0, -0.05);
    let mut state = SimState::new(&settings(8, contact), &el, &inp, down).unwrap();
    let mut floor = f64::NEG_INFINITY;
    for p in state.particles.iter_mut() {
        if p.tag == Tag::Indenter {
            continue;
        }
        p.velocity = Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
        p.affine = small_matrix(&mut rng, 20.0);
        p.deformation = Matrix3::identity() + small_matrix(&mut rng, 0.05);
        if p.position.z < 2.3e-3 {
            p.tag = Tag::ElastomerBottom;
            p.velocity = Vector3::zeros();
            floor = floor.max(p.position.z);
        }
    }
    state.grid.floor = floor.is_finite().then_some(floor);
    state
}

/// Tiny scene state with the sphere seated, as the dataset builds it.
pub fn tiny_state() -> SimState {
    let cfg = tactile_mpm::SceneConfig::tiny();
    let ind = cfg.indenters.iter().find(|i| i.name == "sphere").unwrap();
    let cloud = ind.load(std::path::Path::new(".")).unwrap();
    cfg.build_state(&cloud, [0.0, 0.0], ind.yaw).unwrap()
}

pub fn bits(state: &SimState) -> Vec<u64> {
    state
        .particles
        .iter()
        .flat_map(|p| {
            p.position
                .iter()
                .chain(p.velocity.iter())
                .chain(p.affine.iter())
                .chain(p.deformation.iter())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        })
        .collect()
}

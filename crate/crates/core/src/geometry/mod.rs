//! Particle sets: the elastomer lattice, indenter point clouds, seeded
//! subsampling and rigid placement.

mod io;
pub mod shapes;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use io::{load_point_cloud, write_ply, write_xyz, MM_PER_M};

use crate::mpm::Tag;

/// Layout record of a regular lattice, kept so the top surface can be
/// found again after deformation.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeInfo {
    pub counts: [usize; 3],
    pub dims: Vector3<f64>,
    /// Position of lattice node `(0, 0, 0)`.
    pub origin: Vector3<f64>,
}

impl LatticeInfo {
    pub fn spacing(&self) -> Vector3<f64> {
        Vector3::new(
            self.dims.x / (self.counts[0] - 1) as f64,
            self.dims.y / (self.counts[1] - 1) as f64,
            self.dims.z / (self.counts[2] - 1) as f64,
        )
    }

    /// z layer of particle `index` (x fastest, then y, then z).
    pub fn layer_of(&self, index: usize) -> usize {
        index / (self.counts[0] * self.counts[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub positions: Vec<Vector3<f64>>,
    pub tag: Tag,
    /// `lattice` or the file the points came from.
    pub source: String,
    pub lattice: Option<LatticeInfo>,
    /// Unit outward surface normals, one per point, when known.
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl ParticleSet {
    pub fn new(positions: Vec<Vector3<f64>>, tag: Tag, source: impl Into<String>) -> Self {
        ParticleSet {
            positions,
            tag,
            source: source.into(),
            lattice: None,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Volume represented by the set: the lattice box for lattices,
    /// otherwise the bounding box.
    pub fn volume(&self) -> f64 {
        match &self.lattice {
            Some(l) => l.dims.product(),
            None => {
                let (lo, hi) = self.bounds();
                (hi - lo).product()
            }
        }
    }

    pub fn translate(&mut self, by: &Vector3<f64>) {
        for p in &mut self.positions {
            *p += by;
        }
        if let Some(l) = &mut self.lattice {
            l.origin += by;
        }
    }
}

/// Regular lattice of `counts` points spanning `dims`, with node
/// `(0, 0, 0)` at the origin. Ordering is x fastest, then y, then z.
pub fn make_elastomer_lattice(dims: Vector3<f64>, counts: [usize; 3]) -> ParticleSet {
    assert!(counts.iter().all(|&c| c >= 2), "lattice needs at least 2 points per axis");
    let info = LatticeInfo {
        counts,
        dims,
        origin: Vector3::zeros(),
    };
    let h = info.spacing();
    let mut positions = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                positions.push(Vector3::new(
                    lattice_coord(i, counts[0], h.x, dims.x),
                    lattice_coord(j, counts[1], h.y, dims.y),
                    lattice_coord(k, counts[2], h.z, dims.z),
                ));
            }
        }
    }
    ParticleSet {
        positions,
        tag: Tag::Elastomer,
        source: "lattice".into(),
        lattice: Some(info),
        normals: None,
    }
}

// last node lands exactly on `dim`
fn lattice_coord(i: usize, count: usize, h: f64, dim: f64) -> f64 {
    if i + 1 == count {
        dim
    } else {
        i as f64 * h
    }
}

/// Uniform random sample of `target_count` points without replacement.
/// Points keep their relative order. Targets at or above the cloud size
/// return the cloud unchanged.
pub fn subsample(cloud: &ParticleSet, target_count: usize, seed: u64) -> ParticleSet {
    let target = target_count.max(1);
    if target >= cloud.len() {
        if target > cloud.len() {
            log::warn!(
                "{}: requested {target} points but only {} available; using the full cloud",
                cloud.source,
                cloud.len()
            );
        }
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, cloud.len(), target).into_vec();
    picked.sort_unstable();
    ParticleSet {
        positions: picked.iter().map(|&i| cloud.positions[i]).collect(),
        tag: cloud.tag,
        source: cloud.source.clone(),
        lattice: None,
        normals: cloud
            .normals
            .as_ref()
            .map(|n| picked.iter().map(|&i| n[i]).collect()),
    }
}

/// Neighbours used for each normal fit.
const NORMAL_NEIGHBOURS: usize = 12;

/// Unit normals fitted by PCA over each point's nearest neighbours.
/// Orientation follows an indenter pressed along −z: normals face down,
/// and near-vertical ones face away from the cloud's central axis.
pub fn estimate_normals(positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    use rayon::prelude::*;
    use rstar::primitives::GeomWithData;
    use rstar::RTree;

    let points: Vec<[f64; 3]> = positions.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = RTree::bulk_load(
        points
            .iter()
            .enumerate()
            .map(|(i, q)| GeomWithData::new(*q, i))
            .collect(),
    );
    let centre = positions.iter().sum::<Vector3<f64>>() / positions.len().max(1) as f64;
    let k = NORMAL_NEIGHBOURS.min(positions.len());
    positions
        .par_iter()
        .zip(points.par_iter())
        .map(|(p, q)| {
            let hood: Vec<usize> = tree.nearest_neighbor_iter(q).take(k).map(|h| h.data).collect();
            let mean = hood.iter().map(|&i| positions[i]).sum::<Vector3<f64>>() / hood.len() as f64;
            let mut cov = Matrix3::zeros();
            for &i in &hood {
                let d = positions[i] - mean;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            let mut n: Vector3<f64> = eig.eigenvectors.column(eig.eigenvalues.imin()).into();
            if n.norm() == 0.0 || !n.iter().all(|v| v.is_finite()) {
                n = -Vector3::z();
            }
            let radial = Vector3::new(p.x - centre.x, p.y - centre.y, 0.0);
            let flip = if n.z.abs() > 0.1 { n.z > 0.0 } else { n.dot(&radial) < 0.0 };
            if flip {
                -n
            } else {
                n
            }
        })
        .collect()
}

/// Rigid placement: rotation by `yaw` about the z axis through the
/// origin, then translation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

pub fn place_indenter(cloud: &ParticleSet, pose: &Pose) -> ParticleSet {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), pose.yaw);
    let t = Vector3::from(pose.translation);
    let mut out = cloud.clone();
    for p in &mut out.positions {
        *p = if pose.yaw == 0.0 { *p } else { rot * *p } + t;
    }
    if let Some(normals) = &mut out.normals {
        for n in normals {
            *n = rot * *n;
        }
    }
    out.lattice = None;
    out
}

/// Pose that puts the indenter's lowest point `gap` above `surface_z`
/// with its bounding-box centre over `center_xy`, after rotating by `yaw`.
pub fn seat_pose(cloud: &ParticleSet, center_xy: [f64; 2], surface_z: f64, gap: f64, yaw: f64) -> Pose {
    let rotated = place_indenter(cloud, &Pose { translation: [0.0; 3], yaw });
    let (lo, hi) = rotated.bounds();
    let c = (lo + hi) * 0.5;
    Pose {
        translation: [center_xy[0] - c.x, center_xy[1] - c.y, surface_z + gap - lo.z],
        yaw,
    }
}

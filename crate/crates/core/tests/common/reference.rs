//! A direct re-implementation of one explicit step, evaluated by looping
//! over every node of the grid for every particle.

use nalgebra::{Matrix3, Vector3};

use tactile_mpm::mpm::{ContactModel, Particle, SimState, Tag};

/// 1-D quadratic B-spline, argument in node spacings.
fn n(r: f64) -> f64 {
    let r = r.abs();
    if r < 0.5 {
        0.75 - r * r
    } else if r < 1.5 {
        0.5 * (1.5 - r) * (1.5 - r)
    } else {
        0.0
    }
}

fn stress(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let (mut u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    if u.determinant() * v_t.determinant() < 0.0 {
        // singular values are sorted, the smallest is last
        u.column_mut(2).neg_mut();
    }
    let r = u * v_t;
    let j = f.determinant();
    let p = (f - r) * (2.0 * mu) + f.try_inverse().unwrap().transpose() * (lambda * (j - 1.0) * j);
    p * f.transpose()
}

#[derive(Clone, Copy, Default)]
struct Node {
    m: f64,
    p: Vector3<f64>,
    rm: f64,
    rp: Vector3<f64>,
    rn: Vector3<f64>,
    rx: Vector3<f64>,
    ex: Vector3<f64>,
    v: Vector3<f64>,
}

pub fn reference_step(state: &SimState, command: &Vector3<f64>) -> Vec<Particle> {
    let g = &state.grid;
    let [nx, ny, nz] = g.resolution;
    let dx = g.spacing;
    let dt = state.dt;
    let e = state.material.youngs_modulus;
    let nu = state.material.poisson_ratio;
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let node_x = |i: usize, j: usize, k: usize| g.origin + Vector3::new(i as f64, j as f64, k as f64) * dx;
    let weight = |x: &Vector3<f64>, xi: &Vector3<f64>| {
        let r = (x - xi) / dx;
        n(r.x) * n(r.y) * n(r.z)
    };
    let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;

    let mut nodes = vec![Node::default(); nx * ny * nz];
    for p in &state.particles {
        let rigid = p.tag == Tag::Indenter;
        let mut affine = p.affine * p.mass;
        if !rigid {
            affine -= stress(&p.deformation, mu, lambda) * (dt * 4.0 / (dx * dx) * p.rest_volume);
        }
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let xi = node_x(i, j, k);
                    let w = weight(&p.position, &xi);
                    if w == 0.0 {
                        continue;
                    }
                    let node = &mut nodes[idx(i, j, k)];
                    let dp = (p.velocity * p.mass + affine * (xi - p.position)) * w;
                    node.m += w * p.mass;
                    node.p += dp;
                    if rigid {
                        node.rm += w * p.mass;
                        node.rp += dp;
                        node.rn += p.normal * (w * p.mass);
                        node.rx += p.position * (w * p.mass);
                    } else {
                        node.ex += p.position * (w * p.mass);
                    }
                }
            }
        }
    }

    let collider = match state.contact {
        ContactModel::Collider { gap } => Some(gap * dx),
        ContactModel::Shared => None,
    };
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let node = &mut nodes[idx(i, j, k)];
                let above_floor = g.floor.is_none_or(|f| node_x(i, j, k).z > f + 1e-9 * dx);
                if node.m <= 0.0 || !above_floor {
                    node.v = Vector3::zeros();
                    continue;
                }
                node.v = node.p / node.m;
                if let (Some(threshold), true) = (collider, node.rm > 0.0) {
                    let vr = node.rp / node.rm;
                    let me = node.m - node.rm;
                    let normal = node.rn.norm();
                    node.v = if me <= 1e-9 * node.m || normal == 0.0 {
                        vr
                    } else {
                        let nrm = node.rn / normal;
                        let ve = (node.p - node.rp) / me;
                        let gap = (node.ex / me - node.rx / node.rm).dot(&nrm);
                        if gap < threshold && (vr - ve).dot(&nrm) > 0.0 {
                            vr
                        } else {
                            ve
                        }
                    };
                }
                if i == 0 || i == nx - 1 {
                    node.v.x = 0.0;
                }
                if j == 0 || j == ny - 1 {
                    node.v.y = 0.0;
                }
                if k == 0 || k == nz - 1 {
                    node.v.z = 0.0;
                }
            }
        }
    }

    state
        .particles
        .iter()
        .map(|p| {
            let mut q = p.clone();
            match p.tag {
                Tag::Indenter => {
                    q.velocity = *command;
                    q.affine = Matrix3::zeros();
                    q.deformation = Matrix3::identity();
                }
                _ => {
                    let mut v = Vector3::zeros();
                    let mut b = Matrix3::zeros();
                    for i in 0..nx {
                        for j in 0..ny {
                            for k in 0..nz {
                                let xi = node_x(i, j, k);
                                let w = weight(&p.position, &xi);
                                let vi = nodes[idx(i, j, k)].v;
                                v += vi * w;
                                b += vi * (xi - p.position).transpose() * w;
                            }
                        }
                    }
                    q.affine = b * (4.0 / (dx * dx));
                    q.deformation = (Matrix3::identity() + q.affine * dt) * p.deformation;
                    q.velocity = if p.tag == Tag::ElastomerBottom { Vector3::zeros() } else { v };
                }
            }
            q.position += q.velocity * dt;
            q
        })
        .collect()
}

pub fn max_rel_error(a: &[Particle], b: &[Particle]) -> f64 {
    let scale = |f: &dyn Fn(&Particle) -> f64| b.iter().map(f).fold(f64::MIN_POSITIVE, f64::max);
    let sx = scale(&|p| p.position.norm());
    let sv = scale(&|p| p.velocity.norm());
    let sc = scale(&|p| p.affine.norm());
    let sf = scale(&|p| p.deformation.norm());
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            assert_eq!(p.tag, q.tag);
            [
                (p.position - q.position).norm() / sx,
                (p.velocity - q.velocity).norm() / sv,
                (p.affine - q.affine).norm() / sc,
                (p.deformation - q.deformation).norm() / sf,
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

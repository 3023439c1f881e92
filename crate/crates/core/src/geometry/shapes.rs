//! Procedural indenter clouds for testing and dataset generation.
//!
//! Each indenter is a relief: a square base plate with a feature
//! protruding towards the elastomer (−z). Points are drawn uniformly by
//! area over the downward-facing surface, which is what sampling a mesh of
//! the printed object would give. Coordinates are generated in millimetres
//! with the tip at `z = 0` and the footprint centred on the origin.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParticleSet, MM_PER_M};
use crate::mpm::Tag;

/// Names of the built-in indenters.
pub const SHAPES: [&str; 21] = [
    "cone",
    "cross_lines",
    "curved_surface",
    "cylinder",
    "cylinder_shell",
    "cylinder_side",
    "dot_in",
    "dots",
    "flat_slab",
    "hexagon",
    "line",
    "moon",
    "pacman",
    "parallel_lines",
    "prism",
    "random",
    "sphere",
    "sphere2",
    "torus",
    "triangle",
    "wave1",
];

/// Width of the smoothed wall of extruded features, mm.
const EDGE: f64 = 0.15;
/// Cap on the area element used for rejection sampling.
const MAX_AREA_FACTOR: f64 = 16.0;

type Height = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

struct Relief {
    /// Half-width of the square footprint, mm.
    half: f64,
    height: Height,
}

fn smooth(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Feature of constant height `h` inside the 2-D signed distance field.
fn extrude(h: f64, sdf: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Height {
    Box::new(move |x, y| h * smooth(0.5 - sdf(x, y) / EDGE))
}

fn circle(cx: f64, cy: f64, r: f64) -> impl Fn(f64, f64) -> f64 + Copy {
    move |x, y| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r
}

fn rect(cx: f64, cy: f64, hx: f64, hy: f64) -> impl Fn(f64, f64) -> f64 + Copy {
    move |x, y| {
        let qx = (x - cx).abs() - hx;
        let qy = (y - cy).abs() - hy;
        (qx.max(0.0).hypot(qy.max(0.0))) + qx.max(qy).min(0.0)
    }
}

/// Convex polygon, counter-clockwise vertices.
fn polygon(vertices: Vec<[f64; 2]>) -> impl Fn(f64, f64) -> f64 {
    move |x, y| {
        let n = vertices.len();
        (0..n)
            .map(|i| {
                let [ax, ay] = vertices[i];
                let [bx, by] = vertices[(i + 1) % n];
                let (ex, ey) = (bx - ax, by - ay);
                let len = ex.hypot(ey);
                // outward normal of a CCW edge is (ey, -ex)
                ((x - ax) * ey - (y - ay) * ex) / len
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn regular(n: usize, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let a = phase + i as f64 * std::f64::consts::TAU / n as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

fn dome(radius: f64) -> Height {
    Box::new(move |x, y| (radius * radius - x * x - y * y).max(0.0).sqrt())
}

fn relief(name: &str) -> Option<Relief> {
    let (half, height): (f64, Height) = match name {
        "cone" => (4.0, Box::new(|x: f64, y: f64| 3.0 * (1.0 - x.hypot(y) / 3.0).max(0.0))),
        "cross_lines" => {
            let (a, b) = (rect(0.0, 0.0, 4.0, 0.4), rect(0.0, 0.0, 0.4, 4.0));
            (5.0, extrude(1.5, move |x, y| a(x, y).min(b(x, y))))
        }
        "curved_surface" => (
            5.0,
            Box::new(|x: f64, y: f64| ((144.0 - x * x - y * y).max(0.0).sqrt() - 10.0).max(0.0)),
        ),
        "cylinder" => (3.5, extrude(2.0, circle(0.0, 0.0, 2.5))),
        "cylinder_shell" => (3.5, extrude(2.0, |x: f64, y: f64| (x.hypot(y) - 2.0).abs() - 0.5)),
        "cylinder_side" => {
            let mask = rect(0.0, 0.0, 10.0, 3.5);
            (
                4.5,
                Box::new(move |x: f64, y: f64| {
                    (4.0 - x * x).max(0.0).sqrt() * smooth(0.5 - mask(x, y) / EDGE)
                }),
            )
        }
        "dot_in" => {
            let (outer, inner) = (circle(0.0, 0.0, 2.5), circle(0.0, 0.0, 1.0));
            (3.5, extrude(1.5, move |x, y| outer(x, y).max(-inner(x, y))))
        }
        "dots" => (
            3.5,
            extrude(1.5, |x: f64, y: f64| {
                let mut d = f64::INFINITY;
                for i in -1..=1 {
                    for j in -1..=1 {
                        d = d.min(circle(2.0 * i as f64, 2.0 * j as f64, 0.6)(x, y));
                    }
                }
                d
            }),
        ),
        "flat_slab" => (4.5, extrude(1.5, rect(0.0, 0.0, 3.5, 3.5))),
        "hexagon" => (3.5, extrude(1.5, polygon(regular(6, 2.5, 0.0)))),
        "line" => (5.0, extrude(1.5, rect(0.0, 0.0, 4.0, 0.4))),
        "moon" => {
            let (a, b) = (circle(0.0, 0.0, 2.5), circle(1.2, 0.0, 2.2));
            (3.5, extrude(1.5, move |x, y| a(x, y).max(-b(x, y))))
        }
        "pacman" => {
            let body = circle(0.0, 0.0, 2.5);
            let mouth = polygon(vec![[0.0, 0.0], [4.0, -2.3], [4.0, 2.3]]);
            (3.5, extrude(1.5, move |x, y| body(x, y).max(-mouth(x, y))))
        }
        "parallel_lines" => {
            let bars = [-1.5, 0.0, 1.5].map(|c| rect(0.0, c, 4.0, 0.3));
            (
                5.0,
                extrude(1.5, move |x, y| bars.iter().map(|b| b(x, y)).fold(f64::INFINITY, f64::min)),
            )
        }
        "prism" => {
            let mask = rect(0.0, 0.0, 10.0, 3.5);
            (
                4.5,
                Box::new(move |x: f64, y: f64| {
                    2.0 * (1.0 - x.abs() / 2.0).max(0.0) * smooth(0.5 - mask(x, y) / EDGE)
                }),
            )
        }
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let bumps: Vec<[f64; 3]> = (0..12)
                .map(|_| {
                    [
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(0.3..0.9),
                    ]
                })
                .collect();
            let mask = rect(0.0, 0.0, 3.5, 3.5);
            (
                4.5,
                Box::new(move |x: f64, y: f64| {
                    let relief: f64 = bumps
                        .iter()
                        .map(|[bx, by, a]| a * (-((x - bx).powi(2) + (y - by).powi(2)) / 0.5).exp())
                        .sum();
                    (1.0 + relief) * smooth(0.5 - mask(x, y) / EDGE)
                }),
            )
        }
        "sphere" => (4.0, dome(3.0)),
        "sphere2" => (3.0, dome(2.0)),
        "torus" => (
            4.0,
            Box::new(|x: f64, y: f64| (1.0 - (x.hypot(y) - 2.0).powi(2)).max(0.0).sqrt()),
        ),
        "triangle" => (
            3.5,
            extrude(1.5, polygon(regular(3, 3.0, std::f64::consts::FRAC_PI_2))),
        ),
        "wave1" => {
            let mask = rect(0.0, 0.0, 3.5, 3.5);
            (
                4.5,
                Box::new(move |x: f64, y: f64| {
                    (1.5 + 0.5 * (std::f64::consts::TAU * x / 2.5).sin())
                        * smooth(0.5 - mask(x, y) / EDGE)
                }),
            )
        }
        _ => return None,
    };
    Some(Relief { half, height })
}

/// `count` points on the surface of the named indenter, in metres.
/// Returns `None` for unknown names.
pub fn analytic_cloud(name: &str, count: usize, seed: u64) -> Option<ParticleSet> {
    let relief = relief(name)?;
    let h = &relief.height;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // peak height over a dense probe grid fixes the tip at z = 0
    let probes = 400;
    let mut peak: f64 = 0.0;
    for i in 0..=probes {
        for j in 0..=probes {
            let x = -relief.half + 2.0 * relief.half * i as f64 / probes as f64;
            let y = -relief.half + 2.0 * relief.half * j as f64 / probes as f64;
            peak = peak.max(h(x, y));
        }
    }
    let eps = 1e-4;
    let mut positions = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    while positions.len() < count {
        let x = rng.gen_range(-relief.half..relief.half);
        let y = rng.gen_range(-relief.half..relief.half);
        let gx = (h(x + eps, y) - h(x - eps, y)) / (2.0 * eps);
        let gy = (h(x, y + eps) - h(x, y - eps)) / (2.0 * eps);
        let area = (1.0 + gx * gx + gy * gy).sqrt().min(MAX_AREA_FACTOR);
        if rng.gen::<f64>() * MAX_AREA_FACTOR > area {
            continue;
        }
        let z = peak - h(x, y);
        positions.push(Vector3::new(x, y, z) / MM_PER_M);
        // the solid lies above z = peak - h, so outward points down the slope
        normals.push(Vector3::new(-gx, -gy, -1.0).normalize());
    }
    let mut set = ParticleSet::new(positions, Tag::Indenter, format!("analytic:{name}"));
    set.normals = Some(normals);
    Some(set)
}

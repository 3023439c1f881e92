//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any fails. Pass criterion numbers as arguments to run a subset.
//!
//! Criterion 7 runs one object at desk scale and the 21-object sweep on
//! the tiny scene, and reports the desk sweep time projected from the
//! one-object run. Set `TACTILE_MPM_FULL_SWEEP=1` to run the full sweep
//! at desk scale instead.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::reference::{max_rel_error, reference_step};
use common::shading::{centred_hemisphere, scalar_render, R};
use common::random_scene;
use tactile_mpm::bridge::server::Server;
use tactile_mpm::dataset::{self, compare_datasets, read_manifest, run_press_dataset};
use tactile_mpm::metrics;
use tactile_mpm::mpm::kernel::bspline_weights;
use tactile_mpm::mpm::{ContactModel, Grid, SimState};
use tactile_mpm::render::{self, extract_surface_depth, phong_render, DepthMap, LightSource, RenderParams};
use tactile_mpm::SceneConfig;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Outputs shared between criteria 7 and 10.
static WORK: Mutex<Option<PathBuf>> = Mutex::new(None);

fn work_dir() -> PathBuf {
    WORK.lock()
        .unwrap()
        .get_or_insert_with(|| tempfile::tempdir().unwrap().keep())
        .clone()
}

fn sphere_state(cfg: &SceneConfig) -> Result<SimState, String> {
    let spec = cfg.indenters.iter().find(|i| i.name == "sphere").unwrap();
    let cloud = ok(spec.load(Path::new(".")))?;
    ok(cfg.build_state(&cloud, [0.0, 0.0], spec.yaw))
}

fn c1_scene_fidelity() -> Outcome {
    let cfg = SceneConfig::default();
    ensure!(cfg.elastomer.counts == [101, 101, 21], "counts {:?}", cfg.elastomer.counts);
    ensure!(cfg.elastomer.dims == [0.02, 0.02, 0.004], "dims {:?}", cfg.elastomer.dims);
    ensure!(
        cfg.material.youngs_modulus == 1.45e5 && cfg.material.poisson_ratio == 0.45,
        "material {:?}",
        cfg.material
    );
    ensure!(cfg.grid.resolution == 256 && cfg.grid.edge == 0.033, "grid {:?}", cfg.grid);
    let state = sphere_state(&cfg)?;
    let el = state.elastomer();
    ensure!(el.len() == 214_221, "{} elastomer particles", el.len());
    ensure!(state.grid.resolution == [256; 3], "grid {:?}", state.grid.resolution);
    let v0 = 0.02 * 0.02 * 0.004 / 214_221.0;
    ensure!(
        el.iter().all(|p| ((p.rest_volume - v0) / v0).abs() < 1e-12),
        "rest volume differs from {v0:e}"
    );
    ensure!(
        state
            .particles
            .iter()
            .all(|p| p.deformation == Matrix3::identity() && p.affine == Matrix3::zeros()),
        "initial F or C not at rest"
    );
    let (lo, hi) = el.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(&p.position), hi.sup(&p.position)),
    );
    ensure!(((hi - lo) - Vector3::new(0.02, 0.02, 0.004)).norm() < 1e-12, "box {:?}", hi - lo);
    Ok(format!(
        "214221 particles, V0 = {v0:.4e} m³, grid 256³ at ΔX = {:.4} mm",
        state.grid.spacing * 1e3
    ))
}

fn c2_kernel_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = Grid::new([64; 3], 0.5e-3, Vector3::zeros());
    let mut pou: f64 = 0.0;
    for _ in 0..1000 {
        let x = Vector3::from_fn(|_, _| rng.gen_range(1.5..60.5)) * 0.5e-3;
        let s = ok(bspline_weights(&x, &grid))?;
        pou = pou.max((s.tensor().iter().flatten().flatten().sum::<f64>() - 1.0).abs());
    }
    ensure!(pou < 1e-12, "partition of unity off by {pou:e}");

    let (mut mass_err, mut mom_err, mut lin_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..20 {
        let n = rng.gen_range(1..1000);
        let mut state = random_scene(seed, n, 20, ContactModel::default());
        state.grid.clear();
        ok(state.particle_to_grid())?;
        let mass: f64 = state.particles.iter().map(|p| p.mass).sum();
        mass_err = mass_err.max((state.grid.total_mass() - mass).abs() / mass);

        for p in state.particles.iter_mut() {
            p.deformation = Matrix3::identity();
        }
        state.grid.clear();
        ok(state.particle_to_grid())?;
        let mom: Vector3<f64> = state.particles.iter().map(|p| p.velocity * p.mass).sum();
        let scale: f64 = state.particles.iter().map(|p| p.mass * p.velocity.norm()).sum();
        mom_err = mom_err.max((state.grid.total_momentum() - mom).norm() / scale);

        let c = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-50.0..50.0));
        let [nx, ny, nz] = state.grid.resolution;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let x = state.grid.node_position(i, j, k);
                    state.grid.node_mut(i, j, k).velocity = c + a * x;
                }
            }
        }
        ok(state.grid_to_particle())?;
        for p in state.elastomer() {
            lin_err = lin_err.max((p.affine - a).norm() / a.norm());
        }
    }
    ensure!(mass_err < 1e-10, "mass conservation off by {mass_err:e}");
    ensure!(mom_err < 1e-10, "momentum conservation off by {mom_err:e}");
    ensure!(lin_err < 1e-6, "linear field C off by {lin_err:e}");
    Ok(format!(
        "unity {pou:.1e}, mass {mass_err:.1e}, momentum {mom_err:.1e}, linear C {lin_err:.1e}"
    ))
}

fn c3_oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let command = Vector3::new(0.0, 0.0, -0.05);
    for seed in 0..8 {
        let contact = if seed % 2 == 0 {
            ContactModel::default()
        } else {
            ContactModel::Shared
        };
        let mut state = random_scene(100 + seed, 70, 30, contact);
        ensure!(state.particles.len() <= 100 && state.grid.resolution == [8; 3], "scene too large");
        let want = reference_step(&state, &command);
        ok(state.step(&command))?;
        worst = worst.max(max_rel_error(&state.particles, &want));
    }
    ensure!(worst < 1e-10, "relative error {worst:e}");
    Ok(format!("8 scenes of 100 particles on 8³, max relative error {worst:.1e}"))
}

fn c4_physical_sanity() -> Outcome {
    let cfg = SceneConfig::desk();
    let mut state = sphere_state(&cfg)?;
    ensure!(state.grid.resolution == [64; 3], "grid {:?}", state.grid.resolution);
    let n_el = state.elastomer().len();
    let n_in = state.indenter().len();
    let r = cfg.render.pixel_to_meter;
    let travel = cfg.press.gap + 1e-3;
    let n = (travel / cfg.press.speed / state.dt).round() as usize;
    let v = Vector3::new(0.0, 0.0, -travel / (n as f64 * state.dt));
    let mut min_det = f64::INFINITY;
    let mut run = |state: &mut SimState, v: Vector3<f64>, steps: usize| -> Result<(), String> {
        for _ in 0..steps {
            ok(state.step(&v))?;
            let d = state.min_det_f();
            min_det = min_det.min(d);
            ensure!(d > 0.0, "det F = {d} at step {}", state.step_count);
        }
        Ok(())
    };
    run(&mut state, v, n)?;
    run(&mut state, Vector3::zeros(), 500)?;
    let held = ok(extract_surface_depth(&state, r))?.max();
    run(&mut state, -v, n)?;
    run(&mut state, Vector3::zeros(), 1000)?;
    let resid = ok(extract_surface_depth(&state, r))?
        .values
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let detail = format!(
        "{n_el} + {n_in} particles, depth {:.4} mm, residual {resid:.1e} m, min det F {min_det:.3}",
        held * 1e3
    );
    ensure!((0.8e-3..=1.0e-3).contains(&held), "{detail}");
    ensure!(resid < 5e-5, "{detail}");
    Ok(detail)
}

fn c5_rendering() -> Outcome {
    let d = centred_hemisphere();
    let lights = LightSource::gelsight_rig();
    let params = RenderParams::default();
    let img = ok(phong_render(&d, &lights, &params, None))?;
    let shape = (img.image().height(), img.image().width());
    ensure!(shape == (480, 640), "shape {shape:?}");
    let want = scalar_render(&d, &lights, &params);
    let lsb = img
        .image()
        .as_raw()
        .iter()
        .zip(&want)
        .map(|(a, b)| (*a as i32 - *b as i32).abs())
        .max()
        .unwrap();
    ensure!(lsb <= 1, "hemisphere differs by {lsb} LSB");
    let flat = ok(phong_render(
        &DepthMap::zeros(render::IMAGE_WIDTH, render::IMAGE_HEIGHT, R),
        &lights,
        &params,
        None,
    ))?;
    let first = *flat.image().get_pixel(0, 0);
    ensure!(flat.image().pixels().all(|p| *p == first), "flat render not uniform");
    Ok(format!("hemisphere within {lsb} LSB of the scalar shader, flat render uniform {first:?}"))
}

fn c6_metrics() -> Outcome {
    let a = image::RgbImage::from_fn(640, 480, |x, y| {
        image::Rgb([
            ((x as f64 / 40.0).sin() * 60.0 + 128.0) as u8,
            ((y as f64 / 25.0).cos() * 50.0 + 120.0) as u8,
            (((x + y) as f64 / 60.0).sin() * 40.0 + 100.0) as u8,
        ])
    });
    let same = ok(metrics::compare(&a, &a))?;
    ensure!(same.ssim == 1.0 && same.mae == 0.0 && same.psnr.is_infinite(), "{same:?}");
    let b = image::RgbImage::from_fn(640, 480, |x, y| {
        let p = a.get_pixel(x, y);
        image::Rgb([p[0] + 1, p[1] + 1, p[2] + 1])
    });
    let psnr = ok(metrics::psnr(&a, &b))?;
    ensure!((psnr - 48.13).abs() < 0.005, "psnr(a, a + 1) = {psnr}");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reports: Vec<_> = (1..=10)
        .map(|k| {
            let mut n = a.clone();
            for v in n.iter_mut() {
                let e: f64 = rng.gen_range(-6.0 * k as f64..=6.0 * k as f64);
                *v = (*v as f64 + e).round().clamp(0.0, 255.0) as u8;
            }
            metrics::compare(&a, &n).unwrap()
        })
        .collect();
    let monotone = reports
        .windows(2)
        .all(|w| w[1].psnr < w[0].psnr && w[1].ssim < w[0].ssim && w[1].mae > w[0].mae);
    ensure!(monotone, "noise sweep not monotone: {reports:?}");
    Ok(format!(
        "identities hold, psnr(a, a+1) = {psnr:.2} dB, 10-amplitude sweep monotone (SSIM {:.3} → {:.3})",
        reports[0].ssim, reports[9].ssim
    ))
}

fn check_rows(dir: &Path, objects: usize) -> Result<usize, String> {
    let rows = ok(read_manifest(dir))?;
    ensure!(rows.len() == objects * 99, "{} rows for {objects} objects", rows.len());
    for r in &rows {
        ensure!(r.contact == (r.depth_mm > 0.0), "contact flag wrong on {r:?}");
        ensure!(dir.join(&r.image).exists(), "missing {}", r.image);
    }
    let per_object: BTreeMap<&str, usize> = rows.iter().fold(BTreeMap::new(), |mut m, r| {
        *m.entry(r.object.as_str()).or_default() += 1;
        m
    });
    ensure!(
        per_object.len() == objects && per_object.values().all(|&n| n == 99),
        "{per_object:?}"
    );
    Ok(rows.iter().filter(|r| !r.contact).count())
}

fn desk_one_object(dir: &Path) -> SceneConfig {
    let mut cfg = SceneConfig::desk();
    cfg.indenters.retain(|i| i.name == "sphere");
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn c7_dataset_protocol() -> Outcome {
    let base = work_dir();
    let one = base.join("desk");
    let t = Instant::now();
    ok(run_press_dataset(&desk_one_object(&one), Path::new(".")))?;
    let t_one = t.elapsed().as_secs_f64();
    let flat = check_rows(&one, 1)?;
    ensure!(flat == 9, "{flat} non-contact rows, expected 9");
    ensure!(t_one < 360.0, "one object took {t_one:.0} s");

    let full = std::env::var("TACTILE_MPM_FULL_SWEEP").is_ok_and(|v| v == "1");
    let (sweep, t_sweep, scene) = if full {
        // resumes from the one-object run
        let mut cfg = SceneConfig::desk();
        cfg.output_dir = one.clone();
        let t = Instant::now();
        ok(run_press_dataset(&cfg, Path::new(".")))?;
        (one.clone(), t.elapsed().as_secs_f64() + t_one, "desk")
    } else {
        let mut cfg = SceneConfig::tiny();
        cfg.output_dir = base.join("tiny");
        let t = Instant::now();
        ok(run_press_dataset(&cfg, Path::new(".")))?;
        (cfg.output_dir, t.elapsed().as_secs_f64(), "tiny")
    };
    let flat = check_rows(&sweep, 21)?;
    ensure!(flat == 21 * 9, "{flat} non-contact rows");
    let projected = if full { t_sweep } else { 21.0 * t_one };
    ensure!(projected < 7200.0, "desk sweep {projected:.0} s");
    Ok(format!(
        "desk sphere: 99 rows in {t_one:.0} s; 21 objects: 2079 rows on the {scene} scene in {t_sweep:.0} s; desk sweep {} {:.0} min",
        if full { "measured" } else { "projected" },
        projected / 60.0
    ))
}

fn density_run(dir: &Path, points: usize) -> Result<(), String> {
    let mut cfg = SceneConfig::desk();
    cfg.indenters.retain(|i| i.name == "sphere");
    cfg.indenters[0].target_count = points;
    cfg.press.positions = [1, 1];
    cfg.press.depths = vec![4e-4, 7e-4, 1e-3];
    cfg.output_dir = dir.to_path_buf();
    ok(run_press_dataset(&cfg, Path::new("."))).map(|_| ())
}

fn c8_density_effect() -> Outcome {
    let base = work_dir().join("density");
    for n in [10_000, 100_000, 1_000_000] {
        density_run(&base.join(n.to_string()), n)?;
    }
    let mae = |a: &str, b: &str| -> Result<(f64, f64), String> {
        Ok(ok(compare_datasets(&base.join(a), &base.join(b)))?.aggregate.mae_percent)
    };
    let (m1, s1) = mae("10000", "1000000")?;
    let (m10, s10) = mae("100000", "1000000")?;
    let detail = format!("MAE 1e4 vs 1e6 {m1:.3} ± {s1:.3}%, 1e5 vs 1e6 {m10:.3} ± {s10:.3}%");
    ensure!(m1 > m10 && m10 > 0.0, "{detail}");
    Ok(detail)
}

fn session_script(dir: &Path, mode: &str, start: [f64; 3], v: f64, dt: f64) -> String {
    let mut lines = vec![format!(
        r#"{{"type":"init","protocol":"tactile-mpm/1","object":"sphere","control_dt":{dt},"terminal":{{"max_depth":1e-3}},"session_dir":{}}}"#,
        serde_json::to_string(dir).unwrap()
    )];
    for k in 1..=11 {
        let t = k as f64 * dt;
        let vector = match mode {
            "velocity" => [0.0, 0.0, -v],
            _ => [start[0], start[1], start[2] - v * t],
        };
        lines.push(format!(
            r#"{{"type":"step","mode":"{mode}","vector":{},"sim_time":{t},"request_image":true}}"#,
            serde_json::to_string(&vector).unwrap()
        ));
    }
    lines.push(r#"{"type":"end"}"#.into());
    lines.join("\n") + "\n"
}

fn run_session(cfg: &SceneConfig, script: &str) -> Result<Vec<serde_json::Value>, String> {
    let mut out = Vec::new();
    ok(Server::new(cfg.clone(), ".").serve(script.as_bytes(), &mut out))?;
    String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn c9_bridge() -> Outcome {
    let mut cfg = SceneConfig::desk();
    cfg.press.gap = 1e-4;
    let base = work_dir().join("bridge");
    // 0.1 mm per control step
    let dt = 5e-4;
    let v = 1e-4 / dt;
    let start = {
        let s = sphere_state(&cfg)?;
        let c = s.indenter().iter().map(|p| p.position).sum::<Vector3<f64>>() / s.indenter().len() as f64;
        [c.x, c.y, c.z]
    };
    let by_velocity = run_session(&cfg, &session_script(&base.join("velocity"), "velocity", start, v, dt))?;
    let by_position = run_session(&cfg, &session_script(&base.join("position"), "position", start, v, dt))?;
    for r in by_velocity.iter().chain(&by_position) {
        ensure!(r["type"] != "error", "error reply {r}");
    }
    let states = |rs: &[serde_json::Value]| -> Vec<serde_json::Value> {
        rs.iter().filter(|r| r["type"] == "state").cloned().collect()
    };
    let (sv, sp) = (states(&by_velocity), states(&by_position));
    ensure!(sv.len() == 11 && sp.len() == 11, "{} and {} state replies", sv.len(), sp.len());
    let depth = |r: &serde_json::Value| r["depth"].as_f64().unwrap();
    ensure!(sv.windows(2).all(|w| depth(&w[1]) > depth(&w[0])), "depth not monotone");
    let terminal: Vec<bool> = sv.iter().map(|r| r["terminal"].as_bool().unwrap()).collect();
    ensure!(
        terminal[..10].iter().all(|t| !t) && terminal[10],
        "terminal flags {terminal:?}"
    );
    ensure!(depth(&sv[10]) >= 1e-3 - 1e-9, "final depth {}", depth(&sv[10]));
    let images = fs::read_dir(base.join("velocity"))
        .map_err(|e| e.to_string())?
        .filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "png")))
        .count();
    ensure!(images == 11, "{images} images");
    let mut worst: f64 = 0.0;
    for (a, b) in sv.iter().zip(&sp) {
        worst = worst.max((depth(a) - depth(b)).abs());
        for d in 0..3 {
            worst = worst.max((a["position"][d].as_f64().unwrap() - b["position"][d].as_f64().unwrap()).abs());
        }
    }
    ensure!(worst < 1e-9, "position and velocity runs differ by {worst:e} m");
    Ok(format!(
        "11 images, depth {:.3} → {:.3} mm, terminal at step 11, encodings agree to {worst:.1e} m",
        depth(&sv[0]) * 1e3,
        depth(&sv[10]) * 1e3
    ))
}

fn c10_determinism() -> Outcome {
    let base = work_dir();
    let first = base.join("desk");
    if !first.join(dataset::MANIFEST).exists() {
        ok(run_press_dataset(&desk_one_object(&first), Path::new(".")))?;
    }
    let second = base.join("desk-rerun");
    ok(run_press_dataset(&desk_one_object(&second), Path::new(".")))?;
    // the full sweep may have added objects to the first directory
    let rows = |d: &Path| -> Result<Vec<_>, String> {
        Ok(ok(read_manifest(d))?.into_iter().filter(|r| r.object == "sphere").collect())
    };
    let (ra, rb) = (rows(&first)?, rows(&second)?);
    ensure!(ra == rb, "manifests differ");
    if fs::read(first.join(dataset::MANIFEST)).ok() != fs::read(second.join(dataset::MANIFEST)).ok()
        && ra.len() == ok(read_manifest(&first))?.len()
    {
        return Err("manifest bytes differ".into());
    }
    for r in &ra {
        for f in [&r.image, &r.depth_map] {
            ensure!(
                fs::read(first.join(f)).ok() == fs::read(second.join(f)).ok(),
                "{f} differs"
            );
        }
    }
    Ok(format!("{} rows, manifest, images and depth maps byte-identical", ra.len()))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, Option<f64>, fn() -> Outcome); 10] = [
        (1, "scene fidelity", Some(5.0), c1_scene_fidelity),
        (2, "kernel properties", Some(10.0), c2_kernel_properties),
        (3, "oracle equivalence", Some(5.0), c3_oracle_equivalence),
        (4, "physical sanity", Some(180.0), c4_physical_sanity),
        (5, "rendering", Some(10.0), c5_rendering),
        (6, "metrics", Some(10.0), c6_metrics),
        (7, "dataset protocol", None, c7_dataset_protocol),
        (8, "density effect", None, c8_density_effect),
        (9, "bridge conformance", Some(300.0), c9_bridge),
        (10, "determinism", None, c10_determinism),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(d), Some(l)) if secs > l => Err(format!("{d}; took {secs:.1} s, limit {l} s")),
            (o, _) => o,
        };
        let timing = match limit {
            Some(l) => format!("{secs:.1} s / {l} s"),
            None => format!("{secs:.1} s"),
        };
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name} ({timing}): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({timing}): {d}");
            }
        }
    }
    if let Some(dir) = WORK.lock().unwrap().take() {
        let _ = fs::remove_dir_all(dir);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Press-grid dataset harness and pairwise dataset comparison.
//!
//! Every indenter is pressed at each of the configured xy positions. One
//! press per position descends through the depth list in increasing order
//! and captures an image and a depth map at each depth. Depth 0 is
//! captured before the indenter moves. A manifest CSV indexes the output;
//! rows are appended as positions finish, so an interrupted run picks up
//! where it stopped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use image::RgbImage;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::mpm::SimState;
use crate::render::{self, DepthMap, TactileImage};
use crate::SceneConfig;

pub const MANIFEST: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub object: String,
    pub position: usize,
    pub offset_x_mm: f64,
    pub offset_y_mm: f64,
    pub depth_mm: f64,
    /// False for depth-0 captures, taken before the indenter touches.
    pub contact: bool,
    pub indenter_particles: usize,
    pub elastomer_particles: usize,
    /// Largest value of the captured depth map.
    pub max_depth_mm: f64,
    /// Relative to the dataset directory.
    pub image: String,
    pub depth_map: String,
    /// Wall time of the whole position, seconds. Empty in deterministic mode.
    pub seconds: Option<f64>,
}

impl ManifestRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            object: self.object.clone(),
            position: self.position,
            depth_um: depth_um(self.depth_mm * 1e-3),
        }
    }
}

/// Identity of a manifest row: object, position index and depth in µm.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub object: String,
    pub position: usize,
    pub depth_um: i64,
}

impl std::fmt::Display for RowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/p{}/{}um", self.object, self.position, self.depth_um)
    }
}

fn depth_um(depth_m: f64) -> i64 {
    (depth_m * 1e6).round() as i64
}

/// Moves the indenter tip to height `target` at `speed`, in whole steps
/// of a constant velocity. Returns the number of steps taken.
pub fn drive_tip_to(state: &mut SimState, target: f64, speed: f64) -> Result<usize> {
    let dist = target - state.indenter_tip();
    if dist == 0.0 {
        return Ok(0);
    }
    let n = (dist.abs() / (speed * state.dt)).ceil().max(1.0) as usize;
    let v = Vector3::new(0.0, 0.0, dist / (n as f64 * state.dt));
    for _ in 0..n {
        state.step(&v)?;
    }
    Ok(n)
}

pub fn hold(state: &mut SimState, steps: usize) -> Result<()> {
    state.advance(&Vector3::zeros(), steps)
}

/// Renders the current state of `state` as seen by the camera, using the
/// alignment of `object`.
pub fn capture(
    config: &SceneConfig,
    object: &str,
    state: &SimState,
    background: Option<&RgbImage>,
) -> Result<(DepthMap, TactileImage)> {
    let full = render::extract_surface_depth(state, config.render.pixel_to_meter)?;
    let depth = render::crop_align(&full, &config.alignment_for(object))?;
    let image = render::phong_render(&depth, &config.render.lights, &config.render.params, background)?;
    Ok((depth, image))
}

pub fn load_background(config: &SceneConfig) -> Result<Option<RgbImage>> {
    match &config.render.background {
        Some(p) => Ok(Some(image::open(p)?.to_rgb8())),
        None => Ok(None),
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSummary {
    pub dir: PathBuf,
    pub rows: Vec<ManifestRow>,
    /// Positions simulated by this call; the rest came from the manifest.
    pub simulated: usize,
    pub skipped: usize,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(dir.join(MANIFEST))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_manifest(dir: &Path, rows: &[ManifestRow]) -> Result<()> {
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, dir.join(MANIFEST))?;
    Ok(())
}

fn append_rows(dir: &Path, rows: &[ManifestRow]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

struct Job {
    object: usize,
    position: usize,
    offset: [f64; 2],
}

/// Generates the dataset for `config` under `config.output_dir`. Relative
/// indenter paths resolve against `base`.
pub fn run_press_dataset(config: &SceneConfig, base: &Path) -> Result<DatasetSummary> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut depths = config.press.depths.clone();
    depths.sort_by(f64::total_cmp);
    depths.dedup();
    let offsets = config.press.offsets();

    // rows already on disk, grouped by (object, position)
    let mut done: BTreeMap<(String, usize), Vec<ManifestRow>> = BTreeMap::new();
    if dir.join(MANIFEST).exists() {
        for row in read_manifest(&dir)? {
            done.entry((row.object.clone(), row.position)).or_default().push(row);
        }
    }
    let complete = |name: &str, position: usize| -> bool {
        done.get(&(name.to_string(), position)).is_some_and(|rows| {
            let have: BTreeSet<i64> = rows
                .iter()
                .filter(|r| dir.join(&r.image).exists() && dir.join(&r.depth_map).exists())
                .map(|r| r.key().depth_um)
                .collect();
            depths.iter().all(|d| have.contains(&depth_um(*d)))
        })
    };

    let mut kept: Vec<ManifestRow> = Vec::new();
    let mut jobs = Vec::new();
    for (oi, spec) in config.indenters.iter().enumerate() {
        for (pi, offset) in offsets.iter().enumerate() {
            if complete(&spec.name, pi) {
                kept.extend(done[&(spec.name.clone(), pi)].iter().cloned());
            } else {
                jobs.push(Job {
                    object: oi,
                    position: pi,
                    offset: *offset,
                });
            }
        }
    }
    let skipped = offsets.len() * config.indenters.len() - jobs.len();
    // drop stale rows of positions that will be redone
    write_manifest(&dir, &kept)?;

    let background = load_background(config)?;
    let clouds: Vec<Mutex<Option<crate::geometry::ParticleSet>>> =
        config.indenters.iter().map(|_| Mutex::new(None)).collect();
    let manifest_lock = Mutex::new(());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let fresh: Vec<Vec<ManifestRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let spec = &config.indenters[job.object];
                let cloud = {
                    let mut slot = clouds[job.object].lock().unwrap();
                    if slot.is_none() {
                        *slot = Some(spec.load(base)?);
                    }
                    slot.clone().unwrap()
                };
                let rows = press_position(config, &dir, job, &cloud, &depths, background.as_ref())?;
                let _g = manifest_lock.lock().unwrap();
                append_rows(&dir, &rows)?;
                log::info!("{} position {} done", spec.name, job.position);
                Ok(rows)
            })
            .collect::<Result<_>>()
    })?;

    let mut rows = kept;
    rows.extend(fresh.into_iter().flatten());
    if config.deterministic {
        let order: BTreeMap<&str, usize> = config
            .indenters
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect();
        rows.sort_by_key(|r| (order.get(r.object.as_str()).copied(), r.position, r.key().depth_um));
    }
    write_manifest(&dir, &rows)?;
    Ok(DatasetSummary {
        dir,
        rows,
        simulated: jobs.len(),
        skipped,
    })
}

fn press_position(
    config: &SceneConfig,
    dir: &Path,
    job: &Job,
    cloud: &crate::geometry::ParticleSet,
    depths: &[f64],
    background: Option<&RgbImage>,
) -> Result<Vec<ManifestRow>> {
    let started = Instant::now();
    let spec = &config.indenters[job.object];
    let mut state = config.build_state(cloud, job.offset, spec.yaw)?;
    let rest = state
        .surface
        .as_ref()
        .map(|s| s.rest_height)
        .ok_or(Error::NoSurface)?;
    let rel = |kind: &str, ext: &str, d: f64| {
        format!("{kind}/{}/p{}_d{:04}um.{ext}", spec.name, job.position, depth_um(d))
    };
    fs::create_dir_all(dir.join("images").join(&spec.name))?;
    fs::create_dir_all(dir.join("depth").join(&spec.name))?;
    let mut rows = Vec::with_capacity(depths.len());
    for &d in depths {
        // depth 0 is captured at the seated clearance, without contact
        let target = if d > 0.0 { rest - d } else { rest + config.press.gap };
        drive_tip_to(&mut state, target, config.press.speed)?;
        hold(&mut state, config.press.settle_steps)?;
        let (depth, image) = capture(config, &spec.name, &state, background)?;
        let image_path = rel("images", "png", d);
        let depth_path = rel("depth", "f32", d);
        image.save_png(dir.join(&image_path))?;
        render::write_depth_map(dir.join(&depth_path), &depth)?;
        rows.push(ManifestRow {
            object: spec.name.clone(),
            position: job.position,
            offset_x_mm: job.offset[0] * 1e3,
            offset_y_mm: job.offset[1] * 1e3,
            depth_mm: d * 1e3,
            contact: d > 0.0,
            indenter_particles: cloud.len(),
            elastomer_particles: state.elastomer().len(),
            max_depth_mm: depth.max() * 1e3,
            image: image_path,
            depth_map: depth_path,
            seconds: None,
        });
    }
    if !config.deterministic {
        let s = started.elapsed().as_secs_f64();
        for r in &mut rows {
            r.seconds = Some(s);
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub object: String,
    pub position: usize,
    pub depth_mm: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub mae_percent: f64,
}

/// Mean ± sample standard deviation of each metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub ssim: (f64, f64),
    pub psnr: (f64, f64),
    pub mae_percent: (f64, f64),
}

impl std::fmt::Display for Aggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SSIM {:.3} ± {:.3}  PSNR {:.2} ± {:.2} dB  MAE {:.2} ± {:.2}%",
            self.ssim.0, self.ssim.1, self.psnr.0, self.psnr.1, self.mae_percent.0, self.mae_percent.1
        )
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub pairs: Vec<PairMetrics>,
    pub aggregate: Aggregate,
}

pub fn aggregate(pairs: &[PairMetrics]) -> Aggregate {
    let col = |f: fn(&PairMetrics) -> f64| metrics::mean_std(&pairs.iter().map(f).collect::<Vec<_>>());
    Aggregate {
        ssim: col(|p| p.ssim),
        psnr: col(|p| p.psnr),
        mae_percent: col(|p| p.mae_percent),
    }
}

/// Image metrics for every row shared by two datasets. The manifests
/// must cover the same (object, position, depth) keys.
pub fn compare_datasets(dir_a: &Path, dir_b: &Path) -> Result<Comparison> {
    let a = read_manifest(dir_a)?;
    let b = read_manifest(dir_b)?;
    let index = |rows: &[ManifestRow]| -> BTreeMap<RowKey, ManifestRow> {
        rows.iter().map(|r| (r.key(), r.clone())).collect()
    };
    let (ia, ib) = (index(&a), index(&b));
    let only = |x: &BTreeMap<RowKey, ManifestRow>, y: &BTreeMap<RowKey, ManifestRow>| {
        x.keys().filter(|k| !y.contains_key(k)).map(|k| k.to_string()).collect::<Vec<_>>()
    };
    let (missing_b, missing_a) = (only(&ia, &ib), only(&ib, &ia));
    if !missing_a.is_empty() || !missing_b.is_empty() {
        let mut parts = Vec::new();
        if !missing_b.is_empty() {
            parts.push(format!("missing from {}: {}", dir_b.display(), missing_b.join(", ")));
        }
        if !missing_a.is_empty() {
            parts.push(format!("missing from {}: {}", dir_a.display(), missing_a.join(", ")));
        }
        return Err(Error::ManifestMismatch(parts.join("; ")));
    }
    let pairs = ia
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(key, ra)| {
            let rb = &ib[*key];
            let img_a = image::open(dir_a.join(&ra.image))?.to_rgb8();
            let img_b = image::open(dir_b.join(&rb.image))?.to_rgb8();
            let m: MetricReport = metrics::compare(&img_a, &img_b)?;
            Ok(PairMetrics {
                object: ra.object.clone(),
                position: ra.position,
                depth_mm: ra.depth_mm,
                ssim: m.ssim,
                psnr: m.psnr,
                mae_percent: m.mae_percent(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&pairs);
    Ok(Comparison { pairs, aggregate })
}

/// Per-pair CSV followed by `mean` and `std` rows.
pub fn write_comparison(path: &Path, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["object", "position", "depth_mm", "ssim", "psnr", "mae_percent"])?;
    let num = |v: f64| format!("{v}");
    for p in &cmp.pairs {
        w.write_record([
            p.object.clone(),
            p.position.to_string(),
            num(p.depth_mm),
            num(p.ssim),
            num(p.psnr),
            num(p.mae_percent),
        ])?;
    }
    let a = &cmp.aggregate;
    for (label, pick) in [("mean", 0usize), ("std", 1)] {
        let g = |t: (f64, f64)| num(if pick == 0 { t.0 } else { t.1 });
        w.write_record([label.into(), String::new(), String::new(), g(a.ssim), g(a.psnr), g(a.mae_percent)])?;
    }
    w.flush()?;
    Ok(())
}

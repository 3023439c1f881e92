//! Scene configuration: every physical and numerical parameter of a run,
//! serializable to TOML so a run is reproducible from its config alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, shapes, ParticleSet, Pose};
use crate::mpm::{ContactModel, GridSpec, MaterialParams, PhysicsSettings, SimState};
use crate::render::{Alignment, LightSource, RenderParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElastomerConfig {
    /// Box size, metres.
    pub dims: [f64; 3],
    /// Lattice points per axis.
    pub counts: [usize; 3],
    /// Lower corner in the grid frame, metres.
    pub origin: [f64; 3],
    /// Bottom lattice layers held static.
    pub fixed_layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis.
    pub resolution: usize,
    /// Edge length, metres; node spacing is `edge / resolution`.
    pub edge: f64,
    pub origin: [f64; 3],
}

impl GridConfig {
    pub fn spacing(&self) -> f64 {
        self.edge / self.resolution as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Physics timestep, seconds. Derived from the stability guard when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Fraction of the guard limit used when `dt` is derived.
    pub guard_fraction: f64,
    #[serde(default)]
    pub gravity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndenterSpec {
    pub name: String,
    /// `analytic:<shape>` or a path to a PLY/XYZ file in millimetres.
    pub cloud: String,
    pub target_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub yaw: f64,
    /// Points generated for analytic clouds before subsampling.
    #[serde(default = "default_analytic_points")]
    pub analytic_points: usize,
}

fn default_analytic_points() -> usize {
    1_000_000
}

impl IndenterSpec {
    pub fn analytic(name: &str, target_count: usize, seed: u64) -> Self {
        IndenterSpec {
            name: name.to_string(),
            cloud: format!("analytic:{name}"),
            target_count,
            seed,
            yaw: 0.0,
            analytic_points: default_analytic_points(),
        }
    }

    /// The full cloud before subsampling, in metres with the tip at z = 0.
    pub fn load_full(&self, base: &Path) -> Result<ParticleSet> {
        match self.cloud.strip_prefix("analytic:") {
            Some(shape) => shapes::analytic_cloud(shape, self.analytic_points, 0)
                .ok_or_else(|| Error::Config(format!("unknown analytic indenter {shape:?}"))),
            None => {
                let p = Path::new(&self.cloud);
                let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
                geometry::load_point_cloud(path)
            }
        }
    }

    /// Subsampled cloud, ready for placement.
    pub fn load(&self, base: &Path) -> Result<ParticleSet> {
        let full = self.load_full(base)?;
        Ok(geometry::subsample(&full, self.target_count, self.seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressConfig {
    /// Press positions per axis (x, y).
    pub positions: [usize; 2],
    /// Horizontal distance between press positions, metres.
    pub step: f64,
    /// Indentation depths, metres, below the rest surface.
    pub depths: Vec<f64>,
    /// Initial clearance between indenter tip and surface, metres.
    pub gap: f64,
    /// Indenter speed during a press, m/s.
    pub speed: f64,
    /// Steps held at each depth before capture.
    pub settle_steps: usize,
}

impl PressConfig {
    /// xy offsets of the press positions from the sensor centre, row-major.
    pub fn offsets(&self) -> Vec<[f64; 2]> {
        let [nx, ny] = self.positions;
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                out.push([
                    (i as f64 - (nx as f64 - 1.0) / 2.0) * self.step,
                    (j as f64 - (ny as f64 - 1.0) / 2.0) * self.step,
                ]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    /// Metres per pixel of the camera image.
    pub pixel_to_meter: f64,
    pub lights: Vec<LightSource>,
    pub params: RenderParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub elastomer: ElastomerConfig,
    pub material: MaterialParams,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub indenters: Vec<IndenterSpec>,
    #[serde(default)]
    pub contact: ContactModel,
    pub press: PressConfig,
    pub render: RenderConfig,
    /// Per-object camera alignment, keyed by indenter name.
    #[serde(default)]
    pub alignment: BTreeMap<String, Alignment>,
    pub output_dir: PathBuf,
    /// Physics is bit-reproducible for any thread count either way. When
    /// set, the dataset manifest is written in canonical order and carries
    /// no wall-clock fields, so reruns are byte-identical.
    pub deterministic: bool,
    /// Worker threads for the dataset harness; 0 picks one per core.
    pub workers: usize,
}

impl Default for SceneConfig {
    /// Full-size GelSight scene.
    fn default() -> Self {
        SceneConfig {
            elastomer: ElastomerConfig {
                dims: [0.02, 0.02, 0.004],
                counts: [101, 101, 21],
                origin: [0.0065, 0.0065, 0.003],
                fixed_layers: 2,
            },
            material: MaterialParams {
                youngs_modulus: 1.45e5,
                poisson_ratio: 0.45,
                density: 1000.0,
            },
            grid: GridConfig {
                resolution: 256,
                edge: 0.033,
                origin: [0.0; 3],
            },
            time: TimeConfig {
                dt: None,
                guard_fraction: 0.5,
                gravity: false,
            },
            indenters: shapes::SHAPES
                .iter()
                .map(|s| IndenterSpec::analytic(s, 100_000, 1))
                .collect(),
            contact: ContactModel::default(),
            press: PressConfig {
                positions: [3, 3],
                step: 1e-3,
                depths: (0..=10).map(|i| i as f64 * 1e-4).collect(),
                gap: 1e-4,
                speed: 0.1,
                settle_steps: 100,
            },
            render: RenderConfig {
                pixel_to_meter: 2.8125e-5,
                lights: LightSource::gelsight_rig(),
                params: RenderParams::default(),
                background: None,
            },
            alignment: BTreeMap::new(),
            output_dir: PathBuf::from("out"),
            deterministic: true,
            workers: 0,
        }
    }
}

impl SceneConfig {
    /// Reduced scene for a desktop CPU: 64³ grid and ~2·10⁴ elastomer particles.
    pub fn desk() -> Self {
        let mut c = SceneConfig::default();
        c.elastomer.dims = [0.008, 0.008, 0.004];
        c.elastomer.counts = [33, 33, 17];
        c.elastomer.origin = [0.012, 0.012, 0.002];
        c.grid.resolution = 64;
        c.grid.edge = 0.032;
        c.render.pixel_to_meter = 1.25e-5;
        c.press.speed = 0.2;
        c.press.settle_steps = 50;
        for i in &mut c.indenters {
            i.target_count = 10_000;
        }
        c
    }

    /// Smoke-test scene: 9×9×5 elastomer points on a 20³ grid, 500-point
    /// indenters. Runs a full press in well under a second.
    pub fn tiny() -> Self {
        let mut c = SceneConfig::default();
        c.elastomer.dims = [0.004, 0.004, 0.002];
        c.elastomer.counts = [9, 9, 5];
        c.elastomer.origin = [0.008, 0.008, 0.003];
        c.grid.resolution = 20;
        c.grid.edge = 0.02;
        c.render.pixel_to_meter = 6.25e-6;
        c.press.speed = 0.2;
        c.press.settle_steps = 10;
        for i in &mut c.indenters {
            i.target_count = 500;
            i.analytic_points = 20_000;
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SceneConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        if self.elastomer.counts.iter().any(|&c| c < 2) {
            return Err(Error::Config("elastomer needs at least 2 points per axis".into()));
        }
        if self.elastomer.fixed_layers >= self.elastomer.counts[2] {
            return Err(Error::Config("every elastomer layer would be fixed".into()));
        }
        if self.grid.resolution < 5 || !(self.grid.edge > 0.0) {
            return Err(Error::GridTooSmall(format!(
                "{} nodes over {} m",
                self.grid.resolution, self.grid.edge
            )));
        }
        self.dt()?;
        let (lo, hi) = self.elastomer_bounds();
        let margin = crate::mpm::INIT_MARGIN * self.grid.spacing();
        let top = self.grid.origin[0] + (self.grid.resolution - 1) as f64 * self.grid.spacing();
        for d in 0..3 {
            let g_lo = self.grid.origin[d];
            let g_hi = top - self.grid.origin[0] + self.grid.origin[d];
            if lo[d] < g_lo + margin || hi[d] > g_hi - margin {
                return Err(Error::GridTooSmall(format!(
                    "elastomer leaves less than {margin:.2e} m of grid margin on axis {d}"
                )));
            }
        }
        if self.press.depths.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Config("press depths must be finite and non-negative".into()));
        }
        if !(self.press.speed > 0.0) {
            return Err(Error::Config("press speed must be positive".into()));
        }
        if !(self.render.pixel_to_meter > 0.0) {
            return Err(Error::Config("pixel_to_meter must be positive".into()));
        }
        for l in &self.render.lights {
            l.validate()?;
        }
        self.render.params.validate()?;
        for i in &self.indenters {
            if i.target_count == 0 {
                return Err(Error::Config(format!("{}: target_count must be >= 1", i.name)));
            }
        }
        Ok(())
    }

    fn elastomer_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let o = self.elastomer.origin;
        let d = self.elastomer.dims;
        (o, [o[0] + d[0], o[1] + d[1], o[2] + d[2]])
    }

    /// Stability limit `0.5·ΔX/√(E/ρ)`.
    pub fn dt_guard(&self) -> f64 {
        self.material.max_stable_dt(self.grid.spacing())
    }

    pub fn dt(&self) -> Result<f64> {
        let guard = self.dt_guard();
        match self.time.dt {
            Some(dt) if !(dt > 0.0 && dt <= guard) => Err(Error::Config(format!(
                "dt = {dt:e} s violates the stability guard {guard:e} s"
            ))),
            Some(dt) => Ok(dt),
            None if self.time.guard_fraction > 0.0 && self.time.guard_fraction <= 1.0 => {
                Ok(guard * self.time.guard_fraction)
            }
            None => Err(Error::Config("guard_fraction must lie in (0, 1]".into())),
        }
    }

    pub fn physics(&self) -> Result<PhysicsSettings> {
        let r = self.grid.resolution;
        Ok(PhysicsSettings {
            material: self.material,
            grid: GridSpec {
                resolution: [r, r, r],
                spacing: self.grid.spacing(),
                origin: Vector3::from(self.grid.origin),
            },
            dt: self.dt()?,
            fixed_layers: self.elastomer.fixed_layers,
            gravity: if self.time.gravity {
                Vector3::new(0.0, 0.0, -9.81)
            } else {
                Vector3::zeros()
            },
            contact: self.contact,
        })
    }

    /// Elastomer lattice placed at its configured origin.
    pub fn elastomer_particles(&self) -> ParticleSet {
        let mut set = geometry::make_elastomer_lattice(
            Vector3::from(self.elastomer.dims),
            self.elastomer.counts,
        );
        set.translate(&Vector3::from(self.elastomer.origin));
        set
    }

    /// Centre of the elastomer top surface.
    pub fn surface_center(&self) -> [f64; 3] {
        let (lo, hi) = self.elastomer_bounds();
        [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, hi[2]]
    }

    /// Pose seating `cloud` `gap` above the surface at `offset` from its centre.
    pub fn seat(&self, cloud: &ParticleSet, offset: [f64; 2], yaw: f64) -> Pose {
        let c = self.surface_center();
        geometry::seat_pose(cloud, [c[0] + offset[0], c[1] + offset[1]], c[2], self.press.gap, yaw)
    }

    /// Builds the simulation state with the indenter seated over `offset`.
    pub fn build_state(&self, indenter: &ParticleSet, offset: [f64; 2], yaw: f64) -> Result<SimState> {
        let pose = self.seat(indenter, offset, yaw);
        let placed = geometry::place_indenter(indenter, &pose);
        crate::mpm::init_scene(self, &self.elastomer_particles(), &placed, Vector3::zeros())
    }

    pub fn alignment_for(&self, name: &str) -> Alignment {
        self.alignment.get(name).copied().unwrap_or_default()
    }
}

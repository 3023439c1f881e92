//! Per-step coupling with an external simulator.
//!
//! A [`Session`] owns one simulation. The external side sends the
//! indenter's velocity, or its target position, once per control step;
//! the session advances a fixed number of physics substeps, reports the
//! indentation depth and optionally renders an image. It stops advancing
//! once a terminal condition is met.
//!
//! [`server`] carries the same exchange as newline-delimited JSON over
//! stdio or TCP.

pub mod server;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dataset;
use crate::error::{Error, Result};
use crate::mpm::SimState;
use crate::SceneConfig;

pub const PROTOCOL: &str = "tactile-mpm/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandMode {
    /// `vector` is the indenter velocity, m/s.
    Velocity,
    /// `vector` is the target indenter position, m, measured at its
    /// centroid.
    Position,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepCommand {
    pub mode: CommandMode,
    pub vector: [f64; 3],
    pub sim_time: f64,
    #[serde(default)]
    pub request_image: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalCondition {
    /// Indentation depth below the rest surface, metres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl TerminalCondition {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth.is_none() && self.max_steps.is_none() {
            return Err(Error::Config("terminal condition needs max_depth or max_steps".into()));
        }
        if let Some(d) = self.max_depth {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::Config(format!("max_depth must be finite and >= 0, got {d}")));
            }
        }
        Ok(())
    }
}

/// Session parameters, as carried by the `init` message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    /// Indenter name from the scene config; the first one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// xy offset of the indenter from the sensor centre, metres.
    #[serde(default)]
    pub offset: [f64; 2],
    /// Control period of the external simulator, seconds.
    pub control_dt: f64,
    /// Physics steps per control step; the smallest count that keeps the
    /// physics step within the configured timestep when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    pub terminal: TerminalCondition,
    /// Output directory for images and the step log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReply {
    pub step: u64,
    pub sim_time: f64,
    /// Indentation below the rest surface, metres; zero before contact.
    pub depth: f64,
    /// Indenter centroid, metres.
    pub position: [f64; 3],
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

pub struct Session {
    config: SceneConfig,
    object: String,
    state: SimState,
    rest_height: f64,
    control_dt: f64,
    substeps: usize,
    terminal: TerminalCondition,
    dir: PathBuf,
    log: BufWriter<File>,
    background: Option<RgbImage>,
    step: u64,
    last_time: Option<f64>,
    last: Option<StepReply>,
}

impl Session {
    /// Builds the scene of `config` with the requested indenter seated
    /// `config.press.gap` above the surface. Relative cloud paths resolve
    /// against `base`; `default_dir` is used when the spec names no
    /// session directory.
    pub fn new(config: &SceneConfig, spec: &SessionSpec, base: &Path, default_dir: &Path) -> Result<Self> {
        config.validate()?;
        spec.terminal.validate()?;
        if !(spec.control_dt > 0.0 && spec.control_dt.is_finite()) {
            return Err(Error::Config(format!("control_dt must be positive, got {}", spec.control_dt)));
        }
        let indenter = match &spec.object {
            Some(name) => config
                .indenters
                .iter()
                .find(|i| &i.name == name)
                .ok_or_else(|| Error::Config(format!("unknown object {name:?}")))?,
            None => config
                .indenters
                .first()
                .ok_or_else(|| Error::Config("config lists no indenters".into()))?,
        };
        let physics_dt = config.dt()?;
        let substeps = match spec.substeps {
            Some(0) => return Err(Error::Config("substeps must be >= 1".into())),
            Some(n) => n,
            None => (spec.control_dt / physics_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize,
        };
        let dt = spec.control_dt / substeps as f64;
        if dt > config.dt_guard() {
            return Err(Error::Config(format!(
                "{substeps} substeps of {:e} s give dt = {dt:e} s, above the stability guard {:e} s",
                spec.control_dt,
                config.dt_guard()
            )));
        }
        let cloud = indenter.load(base)?;
        let mut state = config.build_state(&cloud, spec.offset, indenter.yaw)?;
        state.dt = dt;
        let rest_height = state
            .surface
            .as_ref()
            .map(|s| s.rest_height)
            .ok_or(Error::NoSurface)?;
        let dir = spec.session_dir.clone().unwrap_or_else(|| default_dir.to_path_buf());
        fs::create_dir_all(&dir)?;
        let log = BufWriter::new(File::create(dir.join("steps.jsonl"))?);
        Ok(Session {
            background: dataset::load_background(config)?,
            config: config.clone(),
            object: indenter.name.clone(),
            state,
            rest_height,
            control_dt: spec.control_dt,
            substeps,
            terminal: spec.terminal,
            dir,
            log,
            step: 0,
            last_time: None,
            last: None,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn dt(&self) -> f64 {
        self.state.dt
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let ind = self.state.indenter();
        ind.iter().map(|p| p.position).sum::<Vector3<f64>>() / ind.len() as f64
    }

    pub fn depth(&self) -> f64 {
        (self.rest_height - self.state.indenter_tip()).max(0.0)
    }

    pub fn is_terminal(&self) -> bool {
        self.last.as_ref().is_some_and(|r| r.terminal)
    }

    /// Applies one control step.
    pub fn handle_command(&mut self, cmd: &StepCommand) -> Result<StepReply> {
        if !cmd.vector.iter().all(|v| v.is_finite()) || !cmd.sim_time.is_finite() {
            return Err(Error::Protocol(format!("non-finite command {cmd:?}")));
        }
        if let Some(previous) = self.last_time {
            if cmd.sim_time < previous {
                return Err(Error::NonMonotonicTime {
                    previous,
                    got: cmd.sim_time,
                });
            }
        }
        self.last_time = Some(cmd.sim_time);
        if let Some(last) = &self.last {
            if last.terminal {
                let mut frozen = last.clone();
                frozen.sim_time = cmd.sim_time;
                frozen.image = None;
                self.write_log(&frozen)?;
                return Ok(frozen);
            }
        }
        let v = match cmd.mode {
            CommandMode::Velocity => Vector3::from(cmd.vector),
            CommandMode::Position => (Vector3::from(cmd.vector) - self.centroid()) / self.control_dt,
        };
        self.state.advance(&v, self.substeps)?;
        self.step += 1;
        let depth = self.depth();
        let terminal = self
            .terminal
            .max_depth
            .is_some_and(|d| depth >= d - 1e-9)
            || self.terminal.max_steps.is_some_and(|n| self.step >= n);
        let image = if cmd.request_image {
            let (_, img) = dataset::capture(&self.config, &self.object, &self.state, self.background.as_ref())?;
            let name = format!("step{:05}_d{:04}um.png", self.step, (depth * 1e6).round() as i64);
            img.save_png(self.dir.join(&name))?;
            Some(self.dir.join(name))
        } else {
            None
        };
        let c = self.centroid();
        let reply = StepReply {
            step: self.step,
            sim_time: cmd.sim_time,
            depth,
            position: [c.x, c.y, c.z],
            terminal,
            image,
        };
        self.write_log(&reply)?;
        self.last = Some(reply.clone());
        Ok(reply)
    }

    fn write_log(&mut self, reply: &StepReply) -> Result<()> {
        serde_json::to_writer(&mut self.log, reply)?;
        self.log.write_all(b"\n")?;
        self.log.flush()?;
        Ok(())
    }
}

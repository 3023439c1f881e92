//! Soft-body simulation of camera-based tactile sensors.
//!
//! The elastomer gel and a rigid indenter are both represented by
//! particles and advanced with an explicit MLS-MPM scheme ([`mpm`]). The
//! deformed top surface is turned into a depth map and shaded with a
//! Phong model into a 480 × 640 tactile image ([`render`]). [`bridge`]
//! exposes the per-step coupling with an external robot simulator and
//! [`dataset`] the press-grid batch harness.

pub mod bridge;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mpm;
pub mod render;

pub use config::SceneConfig;
pub use error::{Error, Result};

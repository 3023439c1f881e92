use image::RgbImage;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DepthMap;
use crate::error::{Error, Result};

pub const IMAGE_HEIGHT: usize = 480;
pub const IMAGE_WIDTH: usize = 640;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSource {
    /// Unit vector from the surface towards the light.
    pub direction: [f64; 3],
    pub diffuse: [f64; 3],
    pub specular: [f64; 3],
}

impl LightSource {
    /// Light at `azimuth` around the optical axis and `zenith` away from it.
    pub fn from_angles(azimuth: f64, zenith: f64, diffuse: [f64; 3], specular: [f64; 3]) -> Self {
        LightSource {
            direction: [
                azimuth.cos() * zenith.sin(),
                azimuth.sin() * zenith.sin(),
                -zenith.cos(),
            ],
            diffuse,
            specular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = Vector3::from(self.direction).norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("light direction has norm {n}, expected 1")));
        }
        Ok(())
    }

    /// Three lights 120° apart, tinted red, green and blue.
    pub fn gelsight_rig() -> Vec<LightSource> {
        let zenith = 60f64.to_radians();
        [
            (90.0, [0.9, 0.15, 0.15]),
            (210.0, [0.15, 0.9, 0.15]),
            (330.0, [0.15, 0.15, 0.9]),
        ]
        .into_iter()
        .map(|(az, tint)| {
            LightSource::from_angles(f64::to_radians(az), zenith, tint, [0.5, 0.5, 0.5])
        })
        .collect()
    }
}

/// Phong reflectance parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub k_ambient: f64,
    pub k_diffuse: f64,
    pub k_specular: f64,
    pub shininess: f64,
    /// Background light `i_a`, RGB.
    pub ambient_light: [f64; 3],
    /// Unit vector from the surface towards the camera.
    pub view: [f64; 3],
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            k_ambient: 1.0,
            k_diffuse: 0.6,
            k_specular: 0.2,
            shininess: 8.0,
            ambient_light: [0.35, 0.35, 0.35],
            view: [0.0, 0.0, -1.0],
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_ambient < 0.0 || self.k_diffuse < 0.0 || self.k_specular < 0.0 {
            return Err(Error::Config("reflectance coefficients must be non-negative".into()));
        }
        if !(self.shininess >= 1.0) {
            return Err(Error::Config(format!("shininess must be >= 1, got {}", self.shininess)));
        }
        let n = Vector3::from(self.view).norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("view direction has norm {n}, expected 1")));
        }
        Ok(())
    }
}

/// Unit normals `normalize(∂H/∂x, ∂H/∂y, −1)` of the height field
/// `H = −depth`, using central differences `H * [−1, 0, 1] / 2r` inside and
/// one-sided differences on the border.
pub fn surface_normals(depth: &DepthMap) -> Vec<Vector3<f64>> {
    let (w, h) = (depth.width, depth.height);
    let r = depth.pixel_to_meter;
    let height = |c: usize, row: usize| -depth.at(c, row);
    let diff = |lo: f64, hi: f64, span: usize| (hi - lo) / (span as f64 * r);
    let mut out = vec![Vector3::zeros(); w * h];
    out.par_chunks_mut(w.max(1)).enumerate().for_each(|(row, line)| {
        for (col, n) in line.iter_mut().enumerate() {
            let gx = if w < 2 {
                0.0
            } else if col == 0 {
                diff(height(0, row), height(1, row), 1)
            } else if col == w - 1 {
                diff(height(w - 2, row), height(w - 1, row), 1)
            } else {
                diff(height(col - 1, row), height(col + 1, row), 2)
            };
            let gy = if h < 2 {
                0.0
            } else if row == 0 {
                diff(height(col, 0), height(col, 1), 1)
            } else if row == h - 1 {
                diff(height(col, h - 2), height(col, h - 1), 1)
            } else {
                diff(height(col, row - 1), height(col, row + 1), 2)
            };
            *n = Vector3::new(gx, gy, -1.0).normalize();
        }
    });
    out
}

/// Phong shading of `depth` at its own resolution. Values are clamped to
/// `[0, 1]` and quantized to 8 bits; `background`, when given, is added
/// before clamping.
pub fn shade(
    depth: &DepthMap,
    lights: &[LightSource],
    params: &RenderParams,
    background: Option<&RgbImage>,
) -> RgbImage {
    let normals = surface_normals(depth);
    let view = Vector3::from(params.view);
    let lights: Vec<(Vector3<f64>, &LightSource)> =
        lights.iter().map(|l| (Vector3::from(l.direction), l)).collect();
    let (w, h) = (depth.width, depth.height);
    let mut buf = vec![0u8; w * h * 3];
    buf.par_chunks_mut(w * 3).enumerate().for_each(|(row, line)| {
        for col in 0..w {
            let n = normals[row * w + col];
            let mut rgb = [0.0f64; 3];
            for (c, v) in rgb.iter_mut().enumerate() {
                *v = params.k_ambient * params.ambient_light[c];
            }
            for (l, src) in &lights {
                let ln = l.dot(&n);
                let reflect = n * (2.0 * ln) - l;
                let diffuse = params.k_diffuse * ln.max(0.0);
                let specular = params.k_specular * reflect.dot(&view).max(0.0).powf(params.shininess);
                for c in 0..3 {
                    rgb[c] += diffuse * src.diffuse[c] + specular * src.specular[c];
                }
            }
            if let Some(bg) = background {
                let px = bg.get_pixel(col as u32, row as u32);
                for c in 0..3 {
                    rgb[c] += px[c] as f64 / 255.0;
                }
            }
            for c in 0..3 {
                line[col * 3 + c] = quantize(rgb[c]);
            }
        }
    });
    RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer sized to image")
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rendered camera image, always 480 × 640.
#[derive(Clone, Debug, PartialEq)]
pub struct TactileImage(RgbImage);

impl TactileImage {
    pub fn new(image: RgbImage) -> Result<Self> {
        let shape = (image.height() as usize, image.width() as usize, 3);
        if shape != (IMAGE_HEIGHT, IMAGE_WIDTH, 3) {
            return Err(Error::ShapeMismatch(shape, (IMAGE_HEIGHT, IMAGE_WIDTH, 3)));
        }
        Ok(TactileImage(image))
    }

    pub fn image(&self) -> &RgbImage {
        &self.0
    }

    pub fn into_inner(self) -> RgbImage {
        self.0
    }

    pub fn save_png(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.0.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Tactile image of a cropped 480 × 640 depth map.
pub fn phong_render(
    depth: &DepthMap,
    lights: &[LightSource],
    params: &RenderParams,
    background: Option<&RgbImage>,
) -> Result<TactileImage> {
    if lights.is_empty() {
        return Err(Error::Config("at least one light source is required".into()));
    }
    if let Some(bg) = background {
        if (bg.width() as usize, bg.height() as usize) != (depth.width, depth.height) {
            return Err(Error::ShapeMismatch(
                (bg.height() as usize, bg.width() as usize, 3),
                (depth.height, depth.width, 3),
            ));
        }
    }
    TactileImage::new(shade(depth, lights, params, background))
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::error::{Error, Result};
use crate::mpm::SimState;

/// Displacement of the elastomer surface below its rest plane, metres,
/// stored row-major (`values[row * width + col]`, rows along +y).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Metres per pixel.
    pub pixel_to_meter: f64,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize, pixel_to_meter: f64) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
            pixel_to_meter,
        }
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear sample at fractional pixel coordinates, which must lie
    /// inside `[0, width-1] × [0, height-1]`.
    pub fn sample(&self, col: f64, row: f64) -> f64 {
        let c0 = (col.floor() as usize).min(self.width.saturating_sub(2));
        let r0 = (row.floor() as usize).min(self.height.saturating_sub(2));
        let tc = col - c0 as f64;
        let tr = row - r0 as f64;
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let top = self.at(c0, r0) * (1.0 - tc) + self.at(c1, r0) * tc;
        let bottom = self.at(c0, r1) * (1.0 - tc) + self.at(c1, r1) * tc;
        top * (1.0 - tr) + bottom * tr
    }

    /// Centroid `(col, row)` of pixels deeper than `threshold`.
    pub fn centroid_above(&self, threshold: f64) -> Option<(f64, f64)> {
        let (mut sc, mut sr, mut n) = (0.0, 0.0, 0usize);
        for row in 0..self.height {
            for col in 0..self.width {
                if self.at(col, row) > threshold {
                    sc += col as f64;
                    sr += row as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sc / n as f64, sr / n as f64))
    }
}

/// Depth map of the whole elastomer top surface at `pixel_to_meter`
/// resolution, interpolated bilinearly over the reference surface lattice.
/// The map is centred on the lattice and has an even pixel count per axis.
pub fn extract_surface_depth(state: &SimState, pixel_to_meter: f64) -> Result<DepthMap> {
    let surface = state.surface.as_ref().ok_or(Error::NoSurface)?;
    if surface.indices.is_empty() {
        return Err(Error::NoSurface);
    }
    let [nx, ny] = surface.counts;
    let span_x = surface.spacing[0] * (nx - 1) as f64;
    let span_y = surface.spacing[1] * (ny - 1) as f64;
    let r = pixel_to_meter;
    // tiny slack so spans that are whole multiples of r keep their last pixel
    let width = 2 * ((span_x / 2.0) / r + 1e-9).floor() as usize;
    let height = 2 * ((span_y / 2.0) / r + 1e-9).floor() as usize;
    let cx = surface.origin[0] + span_x / 2.0;
    let cy = surface.origin[1] + span_y / 2.0;
    let z: Vec<f64> = surface
        .indices
        .iter()
        .map(|&i| state.particles[i].position.z)
        .collect();
    let z0 = surface.rest_height;
    let mut values = vec![0.0; width * height];
    for row in 0..height {
        let y = cy + (row as f64 + 0.5 - height as f64 / 2.0) * r;
        let v = ((y - surface.origin[1]) / surface.spacing[1]).clamp(0.0, (ny - 1) as f64);
        let j0 = (v.floor() as usize).min(ny - 2);
        let tv = v - j0 as f64;
        for col in 0..width {
            let x = cx + (col as f64 + 0.5 - width as f64 / 2.0) * r;
            let u = ((x - surface.origin[0]) / surface.spacing[0]).clamp(0.0, (nx - 1) as f64);
            let i0 = (u.floor() as usize).min(nx - 2);
            let tu = u - i0 as f64;
            let at = |i: usize, j: usize| z[j * nx + i];
            let zb = (at(i0, j0) * (1.0 - tu) + at(i0 + 1, j0) * tu) * (1.0 - tv)
                + (at(i0, j0 + 1) * (1.0 - tu) + at(i0 + 1, j0 + 1) * tu) * tv;
            values[row * width + col] = z0 - zb;
        }
    }
    Ok(DepthMap {
        width,
        height,
        values,
        pixel_to_meter: r,
    })
}

/// Per-object camera alignment: pixel offset of the crop centre from the
/// source centre, and source pixels per output pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for Alignment {
    fn default() -> Self {
        Alignment {
            offset: [0.0, 0.0],
            scale: 1.0,
        }
    }
}

/// Crops the camera window (480 rows × 640 columns) out of `depth`.
pub fn crop_align(depth: &DepthMap, alignment: &Alignment) -> Result<DepthMap> {
    let s = alignment.scale;
    let [dx, dy] = alignment.offset;
    let cx = (depth.width as f64 - 1.0) / 2.0 + dx;
    let cy = (depth.height as f64 - 1.0) / 2.0 + dy;
    let half_w = (IMAGE_WIDTH as f64 - 1.0) / 2.0 * s;
    let half_h = (IMAGE_HEIGHT as f64 - 1.0) / 2.0 * s;
    let window = [cx - half_w, cy - half_h, cx + half_w, cy + half_h];
    let eps = 1e-9;
    if !(s > 0.0)
        || window[0] < -eps
        || window[1] < -eps
        || window[2] > depth.width as f64 - 1.0 + eps
        || window[3] > depth.height as f64 - 1.0 + eps
    {
        return Err(Error::CropOutOfBounds {
            window,
            width: depth.width,
            height: depth.height,
        });
    }
    let mut out = DepthMap::zeros(IMAGE_WIDTH, IMAGE_HEIGHT, depth.pixel_to_meter * s);
    let integral = s == 1.0 && window[0].fract() == 0.0 && window[1].fract() == 0.0;
    for row in 0..IMAGE_HEIGHT {
        for col in 0..IMAGE_WIDTH {
            out.values[row * IMAGE_WIDTH + col] = if integral {
                depth.at(window[0] as usize + col, window[1] as usize + row)
            } else {
                depth.sample(
                    (window[0] + col as f64 * s).clamp(0.0, depth.width as f64 - 1.0),
                    (window[1] + row as f64 * s).clamp(0.0, depth.height as f64 - 1.0),
                )
            };
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DepthHeader {
    width: usize,
    height: usize,
    pixel_to_meter: f64,
    dtype: String,
}

/// Writes `<path>` as little-endian f32 row-major samples and a JSON
/// header next to it at `<path>.json`.
pub fn write_depth_map(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    let header = DepthHeader {
        width: depth.width,
        height: depth.height,
        pixel_to_meter: depth.pixel_to_meter,
        dtype: "f32le".into(),
    };
    std::fs::write(header_path(path), serde_json::to_string_pretty(&header)? + "\n")?;
    let mut w = BufWriter::new(File::create(path)?);
    for v in &depth.values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_depth_map(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let header: DepthHeader = serde_json::from_str(&std::fs::read_to_string(header_path(path))?)?;
    if header.dtype != "f32le" {
        return Err(Error::Config(format!("unsupported depth dtype {}", header.dtype)));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != header.width * header.height * 4 {
        return Err(Error::Config(format!(
            "{}: expected {} samples, found {} bytes",
            path.display(),
            header.width * header.height,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(DepthMap {
        width: header.width,
        height: header.height,
        values,
        pixel_to_meter: header.pixel_to_meter,
    })
}

fn header_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

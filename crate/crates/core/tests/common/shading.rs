use tactile_mpm::render::{DepthMap, LightSource, RenderParams, IMAGE_HEIGHT, IMAGE_WIDTH};

pub const R: f64 = 2.8125e-5;

/// Spherical cap of radius `radius_px` pixels, pressed to its full radius.
pub fn hemisphere(width: usize, height: usize, radius_px: f64, centre: (f64, f64)) -> DepthMap {
    let mut d = DepthMap::zeros(width, height, R);
    let rad = radius_px * R;
    for row in 0..height {
        for col in 0..width {
            let x = (col as f64 - centre.0) * R;
            let y = (row as f64 - centre.1) * R;
            let rho2 = x * x + y * y;
            if rho2 < rad * rad {
                d.values[row * width + col] = (rad * rad - rho2).sqrt();
            }
        }
    }
    d
}

pub fn centred_hemisphere() -> DepthMap {
    hemisphere(
        IMAGE_WIDTH,
        IMAGE_HEIGHT,
        150.0,
        ((IMAGE_WIDTH - 1) as f64 / 2.0, (IMAGE_HEIGHT - 1) as f64 / 2.0),
    )
}

/// Straight per-pixel evaluation of the shading model with scalar
/// arithmetic only.
pub fn scalar_render(d: &DepthMap, lights: &[LightSource], p: &RenderParams) -> Vec<u8> {
    let (w, h) = (d.width as isize, d.height as isize);
    let hgt = |c: isize, r: isize| -d.values[(r * w + c) as usize];
    let mut out = Vec::with_capacity((w * h * 3) as usize);
    for row in 0..h {
        for col in 0..w {
            let (c0, c1) = ((col - 1).max(0), (col + 1).min(w - 1));
            let (r0, r1) = ((row - 1).max(0), (row + 1).min(h - 1));
            let gx = (hgt(c1, row) - hgt(c0, row)) / ((c1 - c0) as f64 * d.pixel_to_meter);
            let gy = (hgt(col, r1) - hgt(col, r0)) / ((r1 - r0) as f64 * d.pixel_to_meter);
            let len = (gx * gx + gy * gy + 1.0).sqrt();
            let n = [gx / len, gy / len, -1.0 / len];
            for ch in 0..3 {
                let mut v = p.k_ambient * p.ambient_light[ch];
                for l in lights {
                    let ld = l.direction;
                    let ln = ld[0] * n[0] + ld[1] * n[1] + ld[2] * n[2];
                    let refl = [2.0 * ln * n[0] - ld[0], 2.0 * ln * n[1] - ld[1], 2.0 * ln * n[2] - ld[2]];
                    let rv = refl[0] * p.view[0] + refl[1] * p.view[1] + refl[2] * p.view[2];
                    v += p.k_diffuse * ln.max(0.0) * l.diffuse[ch];
                    v += p.k_specular * rv.max(0.0).powf(p.shininess) * l.specular[ch];
                }
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out
}

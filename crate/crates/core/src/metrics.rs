//! Image similarity: SSIM, PSNR and MAE on 8-bit RGB images.
//!
//! SSIM runs on the channel-mean grayscale image with 8 × 8 windows at
//! every position and averages the window scores. PSNR and MAE use every
//! channel of every pixel.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WINDOW: usize = 8;
const L: f64 = 255.0;
const C1: f64 = (0.01 * L) * (0.01 * L);
const C2: f64 = (0.03 * L) * (0.03 * L);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim: f64,
    /// dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    /// Fraction of full scale.
    pub mae: f64,
}

impl MetricReport {
    pub fn mae_percent(&self) -> f64 {
        self.mae * 100.0
    }
}

fn shape(img: &RgbImage) -> (usize, usize, usize) {
    (img.height() as usize, img.width() as usize, 3)
}

fn check(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if shape(a) != shape(b) {
        return Err(Error::ShapeMismatch(shape(a), shape(b)));
    }
    Ok(())
}

pub fn compare(a: &RgbImage, b: &RgbImage) -> Result<MetricReport> {
    Ok(MetricReport {
        ssim: ssim(a, b)?,
        psnr: psnr(a, b)?,
        mae: mae(a, b)?,
    })
}

fn gray(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
        .collect()
}

/// Summed-area table with a zero first row and column.
fn integral(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let w1 = width + 1;
    let mut s = vec![0.0; w1 * (height + 1)];
    for r in 0..height {
        let mut row = 0.0;
        for c in 0..width {
            row += values[r * width + c];
            s[(r + 1) * w1 + c + 1] = s[r * w1 + c + 1] + row;
        }
    }
    s
}

fn window_sum(s: &[f64], w1: usize, r: usize, c: usize) -> f64 {
    s[(r + WINDOW) * w1 + c + WINDOW] - s[r * w1 + c + WINDOW] - s[(r + WINDOW) * w1 + c] + s[r * w1 + c]
}

pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check(a, b)?;
    let (h, w, _) = shape(a);
    if h < WINDOW || w < WINDOW {
        return Err(Error::ShapeMismatch(shape(a), (WINDOW, WINDOW, 3)));
    }
    let ga = gray(a);
    let gb = gray(b);
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let sa = integral(&ga, w, h);
    let sb = integral(&gb, w, h);
    let saa = integral(&sq(&ga, &ga), w, h);
    let sbb = integral(&sq(&gb, &gb), w, h);
    let sab = integral(&sq(&ga, &gb), w, h);
    let n = (WINDOW * WINDOW) as f64;
    let w1 = w + 1;
    let mut total = 0.0;
    for r in 0..=h - WINDOW {
        for c in 0..=w - WINDOW {
            let ma = window_sum(&sa, w1, r, c) / n;
            let mb = window_sum(&sb, w1, r, c) / n;
            // roundoff may leave a tiny negative variance; C2 dominates it
            let va = window_sum(&saa, w1, r, c) / n - ma * ma;
            let vb = window_sum(&sbb, w1, r, c) / n - mb * mb;
            let cab = window_sum(&sab, w1, r, c) / n - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cab + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
    }
    Ok(total / ((h - WINDOW + 1) * (w - WINDOW + 1)) as f64)
}

fn channel_pairs<'a>(a: &'a RgbImage, b: &'a RgbImage) -> impl Iterator<Item = f64> + 'a {
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| x as f64 - y as f64)
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check(a, b)?;
    let n = a.as_raw().len() as f64;
    let mse = channel_pairs(a, b).map(|d| d * d).sum::<f64>() / n;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (L * L / mse).log10()
    })
}

pub fn mae(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check(a, b)?;
    let n = a.as_raw().len() as f64;
    Ok(channel_pairs(a, b).map(f64::abs).sum::<f64>() / n / L)
}

/// Mean and sample standard deviation. Infinite samples (PSNR of
/// identical pairs) give an infinite mean; all-equal samples give zero
/// spread.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !mean.is_finite() || values.len() < 2 {
        return (mean, if values.len() < 2 { 0.0 } else { f64::NAN });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

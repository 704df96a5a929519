//! Image-quality metrics: PSNR, SSIM and the Euclidean distance used for
//! attenuation-vector trajectories.

use crate::error::{dims_mismatch, Error, Result};
use crate::grid::ImageGrid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Peak signal-to-noise ratio in dB. Returns `f64::INFINITY` when the images
/// are identical.
pub fn psnr(reference: &ImageGrid, test: &ImageGrid, data_range: f64) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    if !(data_range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "data_range must be positive, got {data_range}"
        )));
    }
    let sse: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mse = sse / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// Normalized 11×11 Gaussian window with σ = 1.5.
fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            w.push((-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean structural similarity over all fully-contained 11×11 Gaussian
/// windows, with C1 = (0.01·range)² and C2 = (0.03·range)².
pub fn ssim(reference: &ImageGrid, test: &ImageGrid, data_range: f64) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    if !(data_range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "data_range must be positive, got {data_range}"
        )));
    }
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(dims_mismatch(
            format!("at least {SSIM_WINDOW}x{SSIM_WINDOW}"),
            format!("{h}x{w}"),
        ));
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let window = gaussian_window();
    let (x, y) = (reference.data(), test.data());

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - SSIM_WINDOW {
        for left in 0..=w - SSIM_WINDOW {
            let patch = |k: usize| (top + k / SSIM_WINDOW) * w + left + k % SSIM_WINDOW;
            let (mut mx, mut my) = (0.0, 0.0);
            for (k, wk) in window.iter().enumerate() {
                let p = patch(k);
                mx += wk * x[p];
                my += wk * y[p];
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for (k, wk) in window.iter().enumerate() {
                let p = patch(k);
                let (dx, dy) = (x[p] - mx, y[p] - my);
                vx += wk * dx * dx;
                vy += wk * dy * dy;
                cov += wk * dx * dy;
            }
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Euclidean distance between two equal-length vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dims_mismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

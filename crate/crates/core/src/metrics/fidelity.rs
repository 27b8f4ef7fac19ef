//! Full-reference fidelity: PSNR and single-scale SSIM.

use crate::error::{Error, Result};
use crate::sgca::REC709;
use crate::tensor::Tensor;

/// Returned for identical images instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// `10·log10(1/MSE)` for signals with peak 1, capped at [`PSNR_CAP`].
pub fn psnr(reference: &Tensor, test: &Tensor) -> Result<f64> {
    reference.ensure_same_shape(test, "psnr")?;
    let mse = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn luminance(image: &Tensor) -> Result<Vec<f64>> {
    match image.channels() {
        1 => Ok(image.plane(0, 0).iter().map(|&v| v as f64).collect()),
        3 => {
            let (r, g, b) = (image.plane(0, 0), image.plane(0, 1), image.plane(0, 2));
            Ok(r.iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| {
                    REC709[0] as f64 * r as f64 + REC709[1] as f64 * g as f64 + REC709[2] as f64 * b as f64
                })
                .collect())
        }
        c => Err(Error::Shape(format!("ssim expects 1 or 3 channels, got {c}"))),
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - center).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.map(|v| v / sum)
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM on Rec.709 luminance: 11×11 Gaussian window,
/// `σ = 1.5`, `K1 = 0.01`, `K2 = 0.03`, dynamic range 1, averaged over
/// window positions that lie fully inside the image.
pub fn ssim(reference: &Tensor, test: &Tensor) -> Result<f64> {
    reference.ensure_same_shape(test, "ssim")?;
    let (h, w) = (reference.height(), reference.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Degenerate(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let x = luminance(reference)?;
    let y = luminance(test)?;
    let k = gaussian_window();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();

    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let sxx = filter_valid(&prod(&x, &x), h, w, &k);
    let syy = filter_valid(&prod(&y, &y), h, w, &k);
    let sxy = filter_valid(&prod(&x, &y), h, w, &k);

    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

//! UIQM = `0.0282·UICM + 0.2953·UISM + 3.5753·UIConM`, evaluated on the
//! 0–255 intensity scale the constants were fitted for.
//!
//! * UICM: colorfulness from alpha-trimmed (α = 0.1 each tail) means and
//!   variances of the `R−G` and `(R+G)/2−B` opponent channels.
//! * UISM: per-channel EME over 8×8 blocks of the Sobel edge map weighted
//!   by the channel itself, mixed with (0.299, 0.587, 0.114).
//! * UIConM: log-AMEE contrast over 8×8 blocks of the joint RGB range.
//!
//! Blocks with a zero extreme contribute nothing, which keeps flat images
//! finite.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const C_UICM: f64 = 0.0282;
pub const C_UISM: f64 = 0.2953;
pub const C_UICONM: f64 = 3.5753;
pub const BLOCK: usize = 8;
pub const TRIM_ALPHA: f64 = 0.1;
const UISM_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct UiqmComponents {
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
    pub uiqm: f64,
}

/// Planes scaled to 0–255, with dimensions.
struct Planes {
    h: usize,
    w: usize,
    rgb: [Vec<f64>; 3],
}

impl Planes {
    fn new(image: &Tensor) -> Result<Self> {
        image.ensure_rgb("uiqm")?;
        let (h, w) = (image.height(), image.width());
        if h < BLOCK || w < BLOCK {
            return Err(Error::Degenerate(format!(
                "uiqm needs at least one {BLOCK}x{BLOCK} block, got {h}x{w}"
            )));
        }
        let rgb = [0, 1, 2].map(|c| image.plane(0, c).iter().map(|&v| v as f64 * 255.0).collect());
        Ok(Self { h, w, rgb })
    }
}

/// Mean after dropping `ceil(αK)` smallest and `floor(αK)` largest values,
/// and the spread of all values around it.
fn trimmed_stats(mut values: Vec<f64>) -> (f64, f64) {
    let k = values.len();
    values.sort_by(f64::total_cmp);
    let lo = (TRIM_ALPHA * k as f64).ceil() as usize;
    let hi = (TRIM_ALPHA * k as f64).floor() as usize;
    let kept = &values[lo..k - hi];
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
    (mean, var)
}

fn uicm(p: &Planes) -> f64 {
    let [r, g, b] = &p.rgb;
    let rg: Vec<f64> = r.iter().zip(g).map(|(r, g)| r - g).collect();
    let yb: Vec<f64> = r.iter().zip(g).zip(b).map(|((r, g), b)| (r + g) / 2.0 - b).collect();
    let (m_rg, v_rg) = trimmed_stats(rg);
    let (m_yb, v_yb) = trimmed_stats(yb);
    -0.0268 * (m_rg * m_rg + m_yb * m_yb).sqrt() + 0.1586 * (v_rg + v_yb).sqrt()
}

/// Sobel gradient magnitude with replicated borders, rescaled so its maximum is 255.
fn sobel_magnitude(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        src[y * w + x]
    };
    let mut mag = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            mag.push(gx.hypot(gy));
        }
    }
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        mag.iter_mut().for_each(|m| *m *= 255.0 / max);
    }
    mag
}

/// Visits each full `BLOCK × BLOCK` tile, handing the closure the tile's
/// (max, min) over the given planes.
fn block_extremes(planes: &[&[f64]], h: usize, w: usize, mut f: impl FnMut(f64, f64)) -> usize {
    let (by, bx) = (h / BLOCK, w / BLOCK);
    for ty in 0..by {
        for tx in 0..bx {
            let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
            for plane in planes {
                for row in plane[ty * BLOCK * w..].chunks(w).take(BLOCK) {
                    for &v in &row[tx * BLOCK..(tx + 1) * BLOCK] {
                        max = max.max(v);
                        min = min.min(v);
                    }
                }
            }
            f(max, min);
        }
    }
    by * bx
}

fn eme(plane: &[f64], h: usize, w: usize) -> f64 {
    let mut acc = 0.0;
    let blocks = block_extremes(&[plane], h, w, |max, min| {
        if max > 0.0 && min > 0.0 {
            acc += (max / min).ln();
        }
    });
    2.0 * acc / blocks as f64
}

fn uism(p: &Planes) -> f64 {
    p.rgb
        .iter()
        .zip(UISM_WEIGHTS)
        .map(|(plane, weight)| {
            let edges: Vec<f64> = sobel_magnitude(plane, p.h, p.w)
                .iter()
                .zip(plane)
                .map(|(m, v)| m * v)
                .collect();
            weight * eme(&edges, p.h, p.w)
        })
        .sum()
}

fn uiconm(p: &Planes) -> f64 {
    let mut acc = 0.0;
    let planes: Vec<&[f64]> = p.rgb.iter().map(|v| v.as_slice()).collect();
    let blocks = block_extremes(&planes, p.h, p.w, |max, min| {
        let (top, bot) = (max - min, max + min);
        if top > 0.0 && bot > 0.0 {
            let ratio = top / bot;
            acc += ratio * ratio.ln();
        }
    });
    -acc / blocks as f64
}

pub fn uiqm_components(image: &Tensor) -> Result<UiqmComponents> {
    let planes = Planes::new(image)?;
    let (uicm, uism, uiconm) = (uicm(&planes), uism(&planes), uiconm(&planes));
    Ok(UiqmComponents {
        uicm,
        uism,
        uiconm,
        uiqm: C_UICM * uicm + C_UISM * uism + C_UICONM * uiconm,
    })
}

pub fn uiqm(image: &Tensor) -> Result<f64> {
    Ok(uiqm_components(image)?.uiqm)
}

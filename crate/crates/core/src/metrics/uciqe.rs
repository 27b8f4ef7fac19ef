//! UCIQE: chroma spread, luminance contrast, and mean saturation combined
//! as `0.4680·σ_c + 0.2745·con_l + 0.2576·μ_s`.
//!
//! * `σ_c`: population standard deviation of CIELab chroma, divided by 100.
//! * `con_l`: mean of the brightest 1% of L* minus mean of the darkest 1%, divided by 100.
//! * `μ_s`: mean HSV saturation `(max − min) / max` (0 for black pixels).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::color::image_to_lab;
use crate::tensor::Tensor;

pub const WEIGHTS: [f64; 3] = [0.4680, 0.2745, 0.2576];
/// Fraction of pixels in each luminance tail for `con_l`.
pub const CONTRAST_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UciqeComponents {
    pub sigma_c: f64,
    pub con_l: f64,
    pub mu_s: f64,
    pub uciqe: f64,
}

impl UciqeComponents {
    pub fn from_components(sigma_c: f64, con_l: f64, mu_s: f64) -> Self {
        Self {
            sigma_c,
            con_l,
            mu_s,
            uciqe: WEIGHTS[0] * sigma_c + WEIGHTS[1] * con_l + WEIGHTS[2] * mu_s,
        }
    }
}

pub fn uciqe(image: &Tensor) -> Result<UciqeComponents> {
    let lab = image_to_lab(image)?;
    let n = lab.len() as f64;

    let chroma: Vec<f64> = lab.iter().map(|p| p.chroma() / 100.0).collect();
    let mean_c = chroma.iter().sum::<f64>() / n;
    let sigma_c = (chroma.iter().map(|c| (c - mean_c).powi(2)).sum::<f64>() / n).sqrt();

    let mut l: Vec<f64> = lab.iter().map(|p| p.l).collect();
    l.sort_by(f64::total_cmp);
    let k = ((CONTRAST_FRACTION * n).floor() as usize).max(1);
    let low = l[..k].iter().sum::<f64>() / k as f64;
    let high = l[l.len() - k..].iter().sum::<f64>() / k as f64;
    let con_l = (high - low) / 100.0;

    let (r, g, b) = (image.plane(0, 0), image.plane(0, 1), image.plane(0, 2));
    let mu_s = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            let max = r.max(g).max(b) as f64;
            let min = r.min(g).min(b) as f64;
            if max > 0.0 {
                (max - min) / max
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n;

    Ok(UciqeComponents::from_components(sigma_c, con_l, mu_s))
}

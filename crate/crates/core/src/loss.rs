//! Training objectives as plain scoring functions, for validating weights
//! against reference pairs. Nothing here produces gradients.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHARBONNIER_EPS: f64 = 1e-8;
pub const PSNR_LOSS_EPS: f64 = 1e-8;
pub const COLOR_EPS: f64 = 1e-8;

pub const W_CHARBONNIER: f64 = 1.0;
pub const W_PSNR: f64 = 2.0;
pub const W_PERCEPTUAL: f64 = 0.01;
pub const W_COLOR: f64 = 1.0;

/// Maps an image to the feature space the perceptual term compares in.
pub trait FeatureExtractor {
    fn extract(&self, image: &Tensor) -> Result<Tensor>;
}

/// Compares raw pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFeatures;

impl FeatureExtractor for IdentityFeatures {
    fn extract(&self, image: &Tensor) -> Result<Tensor> {
        Ok(image.clone())
    }
}

/// Maps everything to zero; the perceptual term then vanishes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFeatures;

impl FeatureExtractor for ZeroFeatures {
    fn extract(&self, image: &Tensor) -> Result<Tensor> {
        Tensor::zeros(image.shape())
    }
}

fn diffs<'a>(out: &'a Tensor, gt: &'a Tensor, what: &str) -> Result<impl Iterator<Item = f64> + 'a> {
    out.ensure_same_shape(gt, what)?;
    Ok(out.data().iter().zip(gt.data()).map(|(&a, &b)| a as f64 - b as f64))
}

/// Mean of `sqrt(d² + ε²)`.
pub fn charbonnier(out: &Tensor, gt: &Tensor) -> Result<f64> {
    let n = out.len() as f64;
    let eps2 = CHARBONNIER_EPS * CHARBONNIER_EPS;
    Ok(diffs(out, gt, "charbonnier")?.map(|d| (d * d + eps2).sqrt()).sum::<f64>() / n)
}

/// `(50 − 20·log10(1/RMSE)) / 100` with `RMSE = sqrt(MSE + ε)`.
pub fn psnr_loss(out: &Tensor, gt: &Tensor) -> Result<f64> {
    let n = out.len() as f64;
    let mse = diffs(out, gt, "psnr loss")?.map(|d| d * d).sum::<f64>() / n;
    let rmse = (mse + PSNR_LOSS_EPS).sqrt();
    Ok((50.0 - 20.0 * (1.0 / rmse).log10()) / 100.0)
}

/// Mean squared distance between extracted features.
pub fn perceptual(out: &Tensor, gt: &Tensor, extractor: &dyn FeatureExtractor) -> Result<f64> {
    out.ensure_same_shape(gt, "perceptual")?;
    let fo = extractor.extract(out)?;
    let fg = extractor.extract(gt)?;
    if fo.shape() != fg.shape() {
        return Err(Error::Shape(format!(
            "feature extractor produced {:?} and {:?}",
            fo.shape(),
            fg.shape()
        )));
    }
    let n = fo.len() as f64;
    let sum = diffs(&fo, &fg, "perceptual")?.map(|d| d * d).sum::<f64>();
    Ok(sum / n)
}

/// Mean per-pixel angle between RGB vectors, in radians.
///
/// A black pixel on either side gives a cosine of 0 and thus `π/2`.
pub fn color_loss(out: &Tensor, gt: &Tensor) -> Result<f64> {
    out.ensure_same_shape(gt, "color loss")?;
    out.ensure_rgb("color loss")?;
    let (h, w) = (out.height(), out.width());
    let mut total = 0.0;
    let mut count = 0usize;
    for b in 0..out.batch() {
        let o = [out.plane(b, 0), out.plane(b, 1), out.plane(b, 2)];
        let g = [gt.plane(b, 0), gt.plane(b, 1), gt.plane(b, 2)];
        for i in 0..h * w {
            let (mut dot, mut no, mut ng) = (0.0f64, 0.0f64, 0.0f64);
            for c in 0..3 {
                let (p, q) = (o[c][i] as f64, g[c][i] as f64);
                dot += p * q;
                no += p * p;
                ng += q * q;
            }
            let cos = (dot / (no.sqrt() * ng.sqrt() + COLOR_EPS)).clamp(-1.0, 1.0);
            total += cos.acos();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub charbonnier: f64,
    pub psnr_loss: f64,
    pub perceptual: f64,
    pub color: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(charbonnier: f64, psnr_loss: f64, perceptual: f64, color: f64) -> Self {
        Self {
            charbonnier,
            psnr_loss,
            perceptual,
            color,
            total: W_CHARBONNIER * charbonnier + W_PSNR * psnr_loss + W_PERCEPTUAL * perceptual + W_COLOR * color,
        }
    }
}

pub fn total_loss(out: &Tensor, gt: &Tensor, extractor: &dyn FeatureExtractor) -> Result<LossBreakdown> {
    Ok(LossBreakdown::new(
        charbonnier(out, gt)?,
        psnr_loss(out, gt)?,
        perceptual(out, gt, extractor)?,
        color_loss(out, gt)?,
    ))
}

/// Upper bound of [`color_loss`].
pub const COLOR_LOSS_MAX: f64 = PI;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(rgb: [f32; 3]) -> Tensor {
        Tensor::from_fn([1, 3, 4, 4], |_, c, _, _| rgb[c]).unwrap()
    }

    fn random(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn([1, 3, 6, 6], |_, _, _, _| rng.gen_range(0.05..1.0)).unwrap()
    }

    #[test]
    fn charbonnier_examples() {
        let x = random(1);
        assert!((charbonnier(&x, &x).unwrap() - 1e-8).abs() < 1e-20);
        let z = constant([0.0; 3]);
        let d = constant([0.3; 3]);
        assert!((charbonnier(&d, &z).unwrap() - 0.3f32 as f64).abs() < 1e-9);
        let a = Tensor::new([1, 1, 1, 2], vec![0.5, 0.5]).unwrap();
        let b = Tensor::new([1, 1, 1, 2], vec![0.25, 0.75]).unwrap();
        assert!((charbonnier(&a, &b).unwrap() - 0.25).abs() < 1e-9);
        assert!(charbonnier(&a, &x).is_err());
    }

    #[test]
    fn psnr_loss_examples() {
        let a = constant([0.5; 3]);
        let b = constant([0.6; 3]);
        assert!((psnr_loss(&a, &b).unwrap() - 0.3).abs() < 1e-6);
        let z = constant([0.0; 3]);
        let o = constant([1.0; 3]);
        assert!((psnr_loss(&z, &o).unwrap() - 0.5).abs() < 1e-6);
        assert!((psnr_loss(&a, &a).unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn perceptual_examples() {
        let x = random(2);
        assert_eq!(perceptual(&x, &x, &IdentityFeatures).unwrap(), 0.0);
        let a = constant([0.5; 3]);
        let b = constant([0.75; 3]);
        assert!((perceptual(&a, &b, &IdentityFeatures).unwrap() - 0.0625).abs() < 1e-9);
        assert_eq!(perceptual(&x, &random(3), &ZeroFeatures).unwrap(), 0.0);
    }

    #[test]
    fn color_loss_examples() {
        // the ε floor alone gives about sqrt(2ε/|a|²), under 1e-4 once |a|² > 2
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bright = Tensor::from_fn([1, 3, 6, 6], |_, _, _, _| rng.gen_range(0.85..1.0)).unwrap();
        assert!(color_loss(&bright, &bright).unwrap() < 1e-4);
        assert!(color_loss(&bright.map(|v| v * 2.0), &bright).unwrap() < 1e-4);
        let x = random(4);
        assert!(color_loss(&x, &x).unwrap() < 2e-3);
        let r = Tensor::from_fn([1, 3, 1, 1], |_, c, _, _| (c == 0) as u8 as f32).unwrap();
        let g = Tensor::from_fn([1, 3, 1, 1], |_, c, _, _| (c == 1) as u8 as f32).unwrap();
        assert!((color_loss(&r, &g).unwrap() - PI / 2.0).abs() < 1e-6);
        assert!(color_loss(&x.map(|v| v * 2.0), &x).unwrap() < 2e-3);
        let black = constant([0.0; 3]);
        assert!((color_loss(&black, &black).unwrap() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        let x = random(5);
        let t = total_loss(&x, &x, &IdentityFeatures).unwrap();
        assert!((t.charbonnier - 1e-8).abs() < 1e-15);
        assert!((t.psnr_loss + 0.3).abs() < 1e-9);
        assert_eq!(t.perceptual, 0.0);
        assert!((t.total + 0.6).abs() < 1e-3);

        let t = total_loss(&constant([0.5; 3]), &constant([0.6; 3]), &IdentityFeatures).unwrap();
        let (na, nb) = (0.75f64.sqrt(), (3.0 * (0.6f32 as f64).powi(2)).sqrt());
        let floor = (na * nb / (na * nb + COLOR_EPS)).acos();
        assert!((t.color - floor).abs() < 1e-6);
        assert!((t.total - (0.7001 + floor)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn invariants(seed in any::<u64>(), k in 0.1f32..5.0) {
            let a = random(seed);
            let b = random(seed ^ 0x5555);
            let t = total_loss(&a, &b, &IdentityFeatures).unwrap();
            prop_assert!((t.total - (t.charbonnier + 2.0 * t.psnr_loss + 0.01 * t.perceptual + t.color)).abs() < 1e-9);
            prop_assert!(t.charbonnier >= CHARBONNIER_EPS);
            prop_assert!((0.0..=COLOR_LOSS_MAX).contains(&t.color));
            let scaled = color_loss(&a.map(|v| v * k), &b).unwrap();
            prop_assert!((scaled - t.color).abs() < 1e-4);
        }

        #[test]
        fn psnr_loss_grows_with_error(seed in any::<u64>(), d1 in 0.001f32..0.2, extra in 0.01f32..0.2) {
            let a = random(seed);
            let shift = |d: f32| a.map(|v| v + d);
            prop_assert!(psnr_loss(&a, &shift(d1)).unwrap() < psnr_loss(&a, &shift(d1 + extra)).unwrap());
        }
    }
}

//! Adaptive weighted channel compensation.
//!
//! Red and blue are pulled toward the green mean by two scalar weights, then
//! a gray-world gain equalizes the three channel means. The output is
//! clamped to `[0, 1]` once, after the gains are applied.

use crate::error::{Error, Result};
use crate::tensor::{clamp01, Tensor};

/// Guards the gray-world gain against all-black channels.
pub const GRAY_WORLD_EPS: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AwccParams {
    pub alpha_r: f32,
    pub alpha_b: f32,
}

impl AwccParams {
    pub fn new(alpha_r: f32, alpha_b: f32) -> Self {
        Self { alpha_r, alpha_b }
    }

    /// Both weights set to 1; the demo default, not a learned value.
    pub fn unit() -> Self {
        Self::new(1.0, 1.0)
    }

    pub fn disabled() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Returns `true` when both weights fall in the recommended `[0, 2]` range.
    pub fn in_operating_range(&self) -> bool {
        (0.0..=2.0).contains(&self.alpha_r) && (0.0..=2.0).contains(&self.alpha_b)
    }
}

impl Default for AwccParams {
    fn default() -> Self {
        Self::unit()
    }
}

fn check_rgb(image: &Tensor) -> Result<()> {
    image.ensure_rgb("awcc")?;
    if image.batch() != 1 {
        return Err(Error::Shape(format!("awcc expects batch 1, got {}", image.batch())));
    }
    Ok(())
}

fn plane_mean(plane: &[f32]) -> f32 {
    (plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64) as f32
}

/// Per-channel arithmetic means `(r, g, b)` over all pixels.
pub fn channel_means(image: &Tensor) -> Result<[f32; 3]> {
    check_rgb(image)?;
    Ok([0, 1, 2].map(|c| plane_mean(image.plane(0, c))))
}

/// Shift red and blue by `alpha · (mean_g − mean_c)`. Not clamped.
pub fn compensate(image: &Tensor, params: &AwccParams) -> Result<Tensor> {
    let [mr, mg, mb] = channel_means(image)?;
    let shift_r = params.alpha_r * (mg - mr);
    let shift_b = params.alpha_b * (mg - mb);
    let mut out = image.clone();
    out.plane_mut(0, 0).iter_mut().for_each(|v| *v += shift_r);
    out.plane_mut(0, 2).iter_mut().for_each(|v| *v += shift_b);
    Ok(out)
}

/// Gray-world scaling without the final clamp.
pub fn gray_world_unclamped(image: &Tensor) -> Result<Tensor> {
    let means = channel_means(image)?;
    let gray = (means[0] + means[1] + means[2]) / 3.0;
    let mut out = image.clone();
    for (c, m) in means.iter().enumerate() {
        let gain = gray / (m + GRAY_WORLD_EPS);
        out.plane_mut(0, c).iter_mut().for_each(|v| *v *= gain);
    }
    Ok(out)
}

pub fn gray_world_correct(image: &Tensor) -> Result<Tensor> {
    Ok(clamp01(&gray_world_unclamped(image)?))
}

pub fn awcc_forward(image: &Tensor, params: &AwccParams) -> Result<Tensor> {
    gray_world_correct(&compensate(image, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(rgb: [f32; 3], h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |_, c, _, _| rgb[c]).unwrap()
    }

    fn assert_close(t: &Tensor, rgb: [f32; 3], tol: f32) {
        for c in 0..3 {
            for v in t.plane(0, c) {
                assert!((v - rgb[c]).abs() < tol, "channel {c}: {v} vs {}", rgb[c]);
            }
        }
    }

    #[test]
    fn means() {
        assert_eq!(channel_means(&constant([0.2, 0.5, 0.8], 3, 4)).unwrap(), [0.2, 0.5, 0.8]);
        let t = Tensor::from_fn([1, 3, 2, 1], |_, c, y, _| if c == 0 { y as f32 } else { 0.3 }).unwrap();
        assert_eq!(channel_means(&t).unwrap()[0], 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tensor::from_fn([1, 3, 8, 8], |_, _, _, _| rng.gen()).unwrap();
        let m = channel_means(&t).unwrap();
        for c in 0..3 {
            let mut naive = 0.0f64;
            for y in 0..8 {
                for x in 0..8 {
                    naive += t.at(0, c, y, x) as f64;
                }
            }
            assert!((m[c] as f64 - naive / 64.0).abs() < 1e-6);
        }
        assert!(matches!(channel_means(&Tensor::zeros([1, 1, 2, 2]).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn compensate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tensor::from_fn([1, 3, 4, 4], |_, _, _, _| rng.gen()).unwrap();
        // force mean_r == mean_g by copying green into red
        let g = t.plane(0, 1).to_vec();
        t.plane_mut(0, 0).copy_from_slice(&g);
        let out = compensate(&t, &AwccParams::new(1.7, 0.0)).unwrap();
        assert_eq!(out.plane(0, 0), t.plane(0, 0));

        let out = compensate(&constant([0.2, 0.6, 0.4], 2, 2), &AwccParams::unit()).unwrap();
        assert_close(&out, [0.6, 0.6, 0.6], 1e-6);

        assert_eq!(compensate(&t, &AwccParams::disabled()).unwrap(), t);
    }

    #[test]
    fn compensate_preserves_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Tensor::from_fn([1, 3, 6, 6], |_, _, _, _| rng.gen()).unwrap();
        let out = compensate(&t, &AwccParams::new(1.3, 0.7)).unwrap();
        let var = |p: &[f32]| {
            let m = p.iter().sum::<f32>() / p.len() as f32;
            p.iter().map(|v| (v - m).powi(2)).sum::<f32>() / p.len() as f32
        };
        for c in 0..3 {
            assert!((var(t.plane(0, c)) - var(out.plane(0, c))).abs() < 1e-6);
        }
    }

    #[test]
    fn gray_world_examples() {
        let gray = constant([0.37, 0.37, 0.37], 3, 3);
        assert_close(&gray_world_correct(&gray).unwrap(), [0.37; 3], 1e-5);

        let out = gray_world_correct(&constant([0.2, 0.4, 0.6], 2, 3)).unwrap();
        assert_close(&out, [0.4, 0.4, 0.4], 1e-5);

        let black = Tensor::zeros([1, 3, 4, 4]).unwrap();
        let out = gray_world_correct(&black).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_examples() {
        // compensation with unit weights sends every constant image to (g, g, g)
        let out = awcc_forward(&constant([0.1, 0.6, 0.5], 4, 4), &AwccParams::unit()).unwrap();
        assert_close(&out, [0.6; 3], 1e-5);
        // partial blue compensation: (0.1, 0.6, 0.55) -> gray 0.41667
        let out = awcc_forward(&constant([0.1, 0.6, 0.5], 4, 4), &AwccParams::new(0.0, 0.5)).unwrap();
        assert_close(&out, [0.416667; 3], 1e-5);

        let gray = constant([0.25; 3], 5, 5);
        assert_close(&awcc_forward(&gray, &AwccParams::new(0.4, 1.9)).unwrap(), [0.25; 3], 1e-5);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = Tensor::from_fn([1, 3, 8, 8], |_, c, _, _| if c == 1 { 0.95 } else { rng.gen() }).unwrap();
        let out = awcc_forward(&t, &AwccParams::new(2.0, 2.0)).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn gray_world_bias_from_epsilon() {
        // output mean of channel c is μ·M_c/(M_c + ε): equal means only up to
        // μ·ε/M_c, which matters once a channel mean nears zero
        let out = gray_world_unclamped(&constant([0.001, 0.5, 0.5], 2, 2)).unwrap();
        let mu = (0.001 + 0.5 + 0.5) / 3.0;
        let m = channel_means(&out).unwrap();
        let expect = |mc: f64| mu * mc / (mc + GRAY_WORLD_EPS as f64);
        assert!((m[0] as f64 - expect(0.001)).abs() < 1e-6);
        assert!((m[1] as f64 - expect(0.5)).abs() < 1e-6);
        assert!(m[1] - m[0] > 1e-4);
    }
}

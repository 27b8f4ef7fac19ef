//! Statistical global color adjustment.
//!
//! Twelve global statistics (per-channel mean, standard deviation, and the
//! means of the brightest and darkest 5% of pixels) feed a small perceptron
//! whose three outputs become a temperature shift, a tint shift, and a
//! saturation gain. The correction is applied in RGB with a Rec.709
//! luminance pivot.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STAT_DIM: usize = 12;
pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_LAMBDA_T: f32 = 0.15;
pub const DEFAULT_LAMBDA_S: f32 = 0.5;
/// Fraction of pixels in the bright and dark buckets.
pub const EXTREME_FRACTION: f64 = 0.05;
/// Smallest image for which the 5% bucket holds at least one pixel.
pub const MIN_PIXELS: usize = 20;

pub const REC709: [f32; 3] = [0.2126, 0.7152, 0.0722];

/// Global image statistics, one entry per RGB channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatVector {
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub bright: [f32; 3],
    pub dark: [f32; 3],
}

impl StatVector {
    /// `[μ_r, μ_g, μ_b, σ_r, σ_g, σ_b, vb_r, vb_g, vb_b, vd_r, vd_g, vd_b]`.
    pub fn to_array(&self) -> [f32; STAT_DIM] {
        let mut out = [0.0; STAT_DIM];
        for (i, group) in [self.mean, self.std, self.bright, self.dark].iter().enumerate() {
            out[i * 3..i * 3 + 3].copy_from_slice(group);
        }
        out
    }

    pub fn from_array(v: [f32; STAT_DIM]) -> Self {
        let group = |i: usize| [v[i * 3], v[i * 3 + 1], v[i * 3 + 2]];
        Self {
            mean: group(0),
            std: group(1),
            bright: group(2),
            dark: group(3),
        }
    }
}

/// Fully connected layer, `weight` is row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseLayer {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::Config(format!(
                "dense {in_features}->{out_features} needs {} weights and {out_features} biases, got {} and {}",
                in_features * out_features,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            weight,
            bias,
        })
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        self.weight
            .chunks(self.in_features)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// `12 → hidden (ReLU) → 3` perceptron plus the output scaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SgcaParams {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
    pub lambda_t: f32,
    pub lambda_s: f32,
}

impl SgcaParams {
    pub fn new(hidden: DenseLayer, output: DenseLayer) -> Result<Self> {
        if hidden.in_features != STAT_DIM || output.in_features != hidden.out_features || output.out_features != 3 {
            return Err(Error::Config(format!(
                "sgca perceptron must be {STAT_DIM}->h->3, got {}->{}->{}->{}",
                hidden.in_features, hidden.out_features, output.in_features, output.out_features
            )));
        }
        Ok(Self {
            hidden,
            output,
            lambda_t: DEFAULT_LAMBDA_T,
            lambda_s: DEFAULT_LAMBDA_S,
        })
    }

    /// All-zero perceptron, which predicts the identity adjustment.
    pub fn zeros(hidden_width: usize) -> Self {
        Self {
            hidden: DenseLayer::zeros(STAT_DIM, hidden_width),
            output: DenseLayer::zeros(hidden_width, 3),
            lambda_t: DEFAULT_LAMBDA_T,
            lambda_s: DEFAULT_LAMBDA_S,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, hidden_width: usize, range: f32) -> Self {
        let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-range..=range)).collect() };
        Self {
            hidden: DenseLayer {
                in_features: STAT_DIM,
                out_features: hidden_width,
                weight: draw(STAT_DIM * hidden_width),
                bias: draw(hidden_width),
            },
            output: DenseLayer {
                in_features: hidden_width,
                out_features: 3,
                weight: draw(hidden_width * 3),
                bias: draw(3),
            },
            lambda_t: DEFAULT_LAMBDA_T,
            lambda_s: DEFAULT_LAMBDA_S,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.out_features
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.output.param_count()
    }

    /// Raw perceptron outputs before the tanh squashing.
    pub fn raw_outputs(&self, stats: &StatVector) -> [f32; 3] {
        let h: Vec<f32> = self.hidden.forward(&stats.to_array()).into_iter().map(|v| v.max(0.0)).collect();
        let out = self.output.forward(&h);
        [out[0], out[1], out[2]]
    }
}

pub fn param_count(hidden_width: usize) -> usize {
    STAT_DIM * hidden_width + hidden_width + hidden_width * 3 + 3
}

/// Temperature shift, tint shift, and saturation gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorAdjustment {
    pub delta_t: f32,
    pub delta_tau: f32,
    pub s_gain: f32,
}

impl ColorAdjustment {
    pub const IDENTITY: ColorAdjustment = ColorAdjustment {
        delta_t: 0.0,
        delta_tau: 0.0,
        s_gain: 1.0,
    };
}

fn check_image(image: &Tensor) -> Result<()> {
    image.ensure_rgb("sgca")?;
    if image.batch() != 1 {
        return Err(Error::Shape(format!("sgca expects batch 1, got {}", image.batch())));
    }
    Ok(())
}

/// Mean, population standard deviation, and bright/dark bucket means per channel.
///
/// The bucket size is `max(1, floor(0.05 · H · W))`; selection is by value,
/// so the result does not depend on pixel order.
pub fn compute_stats(image: &Tensor) -> Result<StatVector> {
    check_image(image)?;
    let n = image.height() * image.width();
    if n < MIN_PIXELS {
        return Err(Error::Degenerate(format!(
            "statistics need at least {MIN_PIXELS} pixels, got {n}"
        )));
    }
    let k = ((EXTREME_FRACTION * n as f64).floor() as usize).max(1);
    let mut stats = StatVector {
        mean: [0.0; 3],
        std: [0.0; 3],
        bright: [0.0; 3],
        dark: [0.0; 3],
    };
    let mut scratch = Vec::with_capacity(n);
    for c in 0..3 {
        let plane = image.plane(0, c);
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;

        scratch.clear();
        scratch.extend_from_slice(plane);
        scratch.select_nth_unstable_by(k - 1, f32::total_cmp);
        let dark = scratch[..k].iter().map(|&v| v as f64).sum::<f64>() / k as f64;
        scratch.select_nth_unstable_by(n - k, f32::total_cmp);
        let bright = scratch[n - k..].iter().map(|&v| v as f64).sum::<f64>() / k as f64;

        stats.mean[c] = mean as f32;
        stats.std[c] = var.sqrt() as f32;
        // the ordering holds exactly in real arithmetic; pin it against rounding
        stats.dark[c] = (dark as f32).min(stats.mean[c]);
        stats.bright[c] = (bright as f32).max(stats.mean[c]);
    }
    Ok(stats)
}

/// `ΔT, Δτ = λ_t·tanh(raw_0, raw_1)`, `S = 1 + λ_s·tanh(raw_2)`.
///
/// A NaN raw output is treated as zero, so the bounds hold for every input.
pub fn predict_adjustment(stats: &StatVector, params: &SgcaParams) -> ColorAdjustment {
    let squash = |v: f32| if v.is_nan() { 0.0 } else { v.tanh() };
    let raw = params.raw_outputs(stats);
    ColorAdjustment {
        delta_t: params.lambda_t * squash(raw[0]),
        delta_tau: params.lambda_t * squash(raw[1]),
        s_gain: 1.0 + params.lambda_s * squash(raw[2]),
    }
}

/// Temperature/tint shift followed by saturation scaling about Rec.709 luminance, unclamped.
pub fn apply_adjustment_unclamped(image: &Tensor, adj: &ColorAdjustment) -> Result<Tensor> {
    check_image(image)?;
    let mut out = image.clone();
    let n = image.height() * image.width();
    let data = out.data_mut();
    let (r, rest) = data.split_at_mut(n);
    let (g, b) = rest.split_at_mut(n);
    for ((r, g), b) in r.iter_mut().zip(g.iter_mut()).zip(b.iter_mut()) {
        let rs = *r + adj.delta_t;
        let gs = *g - adj.delta_tau;
        let bs = *b - adj.delta_t;
        let y = REC709[0] * rs + REC709[1] * gs + REC709[2] * bs;
        *r = y + adj.s_gain * (rs - y);
        *g = y + adj.s_gain * (gs - y);
        *b = y + adj.s_gain * (bs - y);
    }
    Ok(out)
}

pub fn apply_adjustment(image: &Tensor, adj: &ColorAdjustment) -> Result<Tensor> {
    Ok(crate::tensor::clamp01(&apply_adjustment_unclamped(image, adj)?))
}

pub fn sgca_forward(image: &Tensor, params: &SgcaParams) -> Result<Tensor> {
    let stats = compute_stats(image)?;
    apply_adjustment(image, &predict_adjustment(&stats, params))
}

//! Latency harness for the deployed (inference-form) model.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{count_flops, enhance, FlopReport, Mode, ModelWeights};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub width: usize,
    pub height: usize,
    pub iters: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            iters: 20,
            warmup: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub iters: usize,
    pub warmup: usize,
    pub seed: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
    pub samples_ms: Vec<f64>,
    pub params: usize,
    pub flops: FlopReport,
}

/// Uniform `[0, 1)` test image, reproducible from `seed`.
pub fn bench_image(width: usize, height: usize, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([1, 3, height, width], |_, _, _, _| rng.gen())
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn run_bench(weights: &ModelWeights, opts: &BenchOptions) -> Result<BenchReport> {
    if weights.mode() != Mode::Inference {
        return Err(Error::Mode(
            "benchmark expects inference-form weights; convert them first".into(),
        ));
    }
    if opts.iters == 0 {
        return Err(Error::Config("iters must be at least 1".into()));
    }
    let image = bench_image(opts.width, opts.height, opts.seed)?;
    for _ in 0..opts.warmup {
        enhance(&image, weights)?;
    }
    let mut samples = Vec::with_capacity(opts.iters);
    for _ in 0..opts.iters {
        let start = Instant::now();
        let out = enhance(&image, weights)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(BenchReport {
        width: opts.width,
        height: opts.height,
        iters: opts.iters,
        warmup: opts.warmup,
        seed: opts.seed,
        mean_ms: mean,
        median_ms: percentile(&sorted, 0.5),
        p95_ms: percentile(&sorted, 0.95),
        fps: 1e3 / mean,
        samples_ms: samples,
        params: weights.param_count(),
        flops: count_flops(weights.config(), opts.height, opts.width),
    })
}

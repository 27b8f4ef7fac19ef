//! Global temperature, tint and saturation correction driven by twelve
//! image statistics.
//!
//!     cargo run --example color_adjustment

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uwe::sgca::{apply_adjustment, compute_stats, predict_adjustment, ColorAdjustment, SgcaParams, DEFAULT_HIDDEN};
use uwe::Tensor;

fn main() -> uwe::Result<()> {
    let image = Tensor::from_fn([1, 3, 32, 32], |_, c, y, x| {
        let base = [0.3f32, 0.55, 0.6][c];
        base + 0.2 * ((x + 2 * y) % 7) as f32 / 7.0
    })?;

    let stats = compute_stats(&image)?;
    println!("stats: mean {:.3?}", stats.mean);
    println!("       std  {:.3?}", stats.std);
    println!("       top 5% {:.3?}, bottom 5% {:.3?}", stats.bright, stats.dark);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SgcaParams::random(&mut rng, DEFAULT_HIDDEN, 0.5);
    let adj = predict_adjustment(&stats, &params);
    println!(
        "predicted: temperature {:+.4}, tint {:+.4}, saturation x{:.4}",
        adj.delta_t, adj.delta_tau, adj.s_gain
    );

    let warmer = ColorAdjustment {
        delta_t: 0.1,
        delta_tau: 0.0,
        s_gain: 1.3,
    };
    for (label, a) in [("predicted", adj), ("hand-set", warmer)] {
        let out = apply_adjustment(&image, &a)?;
        let mean = |c: usize| out.plane(0, c).iter().sum::<f32>() / out.plane(0, c).len() as f32;
        println!("{label:<10} -> channel means ({:.3}, {:.3}, {:.3})", mean(0), mean(1), mean(2));
    }
    Ok(())
}

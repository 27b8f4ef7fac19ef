//! Breakdown of the training objective for a few output/reference pairs.
//!
//!     cargo run --example losses

use uwe::loss::{total_loss, IdentityFeatures};
use uwe::Tensor;

fn main() -> uwe::Result<()> {
    let reference = Tensor::from_fn([1, 3, 16, 16], |_, c, y, x| 0.2 + 0.03 * (x + y) as f32 / 2.0 + 0.1 * c as f32)?;
    let cases = [
        ("identical", reference.clone()),
        ("brighter by 0.05", reference.map(|v| v + 0.05)),
        ("scaled by 0.8", reference.map(|v| v * 0.8)),
        ("inverted", reference.map(|v| 1.0 - v)),
    ];
    println!("{:<18} {:>11} {:>9} {:>10} {:>7} {:>8}", "output", "charbonnier", "psnr", "perceptual", "color", "total");
    for (name, out) in &cases {
        let l = total_loss(out, &reference, &IdentityFeatures)?;
        println!(
            "{name:<18} {:>11.5} {:>9.5} {:>10.6} {:>7.4} {:>8.4}",
            l.charbonnier, l.psnr_loss, l.perceptual, l.color, l.total
        );
    }
    Ok(())
}

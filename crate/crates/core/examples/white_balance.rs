//! Channel compensation followed by gray-world correction on a synthetic
//! blue-green cast.
//!
//!     cargo run --example white_balance

use uwe::awcc::{awcc_forward, channel_means, AwccParams};
use uwe::Tensor;

fn main() -> uwe::Result<()> {
    // a gradient scene seen through water that absorbs most of the red
    let cast = [0.25f32, 0.85, 0.7];
    let image = Tensor::from_fn([1, 3, 48, 64], |_, c, y, x| {
        let scene = 0.2 + 0.6 * (x as f32 / 63.0) * (0.5 + 0.5 * y as f32 / 47.0);
        cast[c] * scene
    })?;

    let show = |label: &str, t: &Tensor| -> uwe::Result<()> {
        let [r, g, b] = channel_means(t)?;
        println!("{label:<22} means r={r:.4} g={g:.4} b={b:.4}");
        Ok(())
    };
    show("input", &image)?;
    for (label, alpha) in [
        ("gray world only", AwccParams::disabled()),
        ("alpha = (0.5, 0.5)", AwccParams::new(0.5, 0.5)),
        ("alpha = (1, 1)", AwccParams::unit()),
    ] {
        show(label, &awcc_forward(&image, &alpha)?)?;
    }
    Ok(())
}

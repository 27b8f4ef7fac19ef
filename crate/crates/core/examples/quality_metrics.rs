//! Full-reference and no-reference quality scores for a degraded image.
//!
//!     cargo run --example quality_metrics

use uwe::awcc::{awcc_forward, AwccParams};
use uwe::metrics::{ciede2000_image, psnr, ssim, uciqe, uiqm_components};
use uwe::Tensor;

fn main() -> uwe::Result<()> {
    let clean = Tensor::from_fn([1, 3, 64, 64], |_, c, y, x| {
        let v = 0.5 + 0.4 * ((x as f32 / 6.0).sin() * (y as f32 / 9.0).cos());
        v * [0.9f32, 0.8, 0.7][c]
    })?;
    // water: red absorbed, haze added
    let murky = Tensor::from_fn([1, 3, 64, 64], |_, c, y, x| {
        0.6 * clean.at(0, c, y, x) * [0.4f32, 1.0, 0.95][c] + 0.15
    })?;
    let corrected = awcc_forward(&murky, &AwccParams::unit())?;

    println!("{:<10} {:>8} {:>7} {:>9} {:>7} {:>7}", "image", "PSNR", "SSIM", "CIEDE2000", "UCIQE", "UIQM");
    for (name, img) in [("clean", &clean), ("murky", &murky), ("corrected", &corrected)] {
        println!(
            "{name:<10} {:>8.2} {:>7.4} {:>9.3} {:>7.4} {:>7.4}",
            psnr(&clean, img)?,
            ssim(&clean, img)?,
            ciede2000_image(&clean, img)?,
            uciqe(img)?.uciqe,
            uiqm_components(img)?.uiqm
        );
    }
    let u = uiqm_components(&murky)?;
    println!("murky UIQM parts: UICM {:.3}, UISM {:.3}, UIConM {:.3}", u.uicm, u.uism, u.uiconm);
    Ok(())
}

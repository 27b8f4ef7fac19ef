//! End-to-end enhancement of an image file with seeded demo weights.
//!
//!     cargo run --example enhance_image -- input.png output.png [seed]
//!
//! Without arguments a synthetic underwater scene is enhanced and written to
//! the system temp directory.

use std::path::PathBuf;

use uwe::image_io::{read_image, write_image};
use uwe::pipeline::{convert_to_inference, enhance, ModelConfig, ModelWeights};
use uwe::Tensor;

fn synthetic_scene() -> uwe::Result<Tensor> {
    Tensor::from_fn([1, 3, 96, 128], |_, c, y, x| {
        let rock = if (x / 16 + y / 16) % 2 == 0 { 0.7 } else { 0.35 };
        let depth = 1.0 - 0.5 * y as f32 / 95.0;
        [0.2f32, 0.75, 0.65][c] * rock * depth + 0.05
    })
}

fn main() -> uwe::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (image, output) = match args.as_slice() {
        [input, output, ..] => (read_image(input)?, PathBuf::from(output)),
        _ => (synthetic_scene()?, std::env::temp_dir().join("uwe_enhanced.ppm")),
    };
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let train = ModelWeights::random(ModelConfig::default(), seed)?;
    let deployed = convert_to_inference(&train)?;
    let out = enhance(&image, &deployed)?;
    write_image(&out, &output)?;
    println!(
        "{}x{} image enhanced with {} parameters -> {}",
        image.width(),
        image.height(),
        deployed.param_count(),
        output.display()
    );
    Ok(())
}

//! Save, inspect and reload weight files in both forms.
//!
//!     cargo run --example weight_files

use uwe::pipeline::{convert_to_inference, ModelConfig, ModelWeights};
use uwe::weights_file::{encode, load_weights, read_manifest, save_weights};

fn main() -> uwe::Result<()> {
    let dir = std::env::temp_dir();
    let train = ModelWeights::random(ModelConfig::default(), 5)?;
    let infer = convert_to_inference(&train)?;

    for (name, weights) in [("train", &train), ("inference", &infer)] {
        let path = dir.join(format!("uwe_demo_{name}.uiew"));
        save_weights(weights, &path)?;
        let bytes = encode(weights);
        let (manifest, _) = read_manifest(&bytes)?;
        println!("{} ({} bytes, mode {}):", path.display(), bytes.len(), manifest.mode);
        for t in manifest.tensors.iter().take(4) {
            println!("  {:<36} {:?} @ {}", t.name, t.shape, t.byte_offset);
        }
        println!("  ... {} tensors total", manifest.tensors.len());
        let back = load_weights(&path)?;
        assert_eq!(encode(&back), bytes);
    }
    Ok(())
}

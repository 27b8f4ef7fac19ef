//! Parameter and FLOP accounting, plus a short latency run of the deployed
//! model.
//!
//!     cargo run --release --example efficiency

use uwe::bench::{run_bench, BenchOptions};
use uwe::pipeline::{convert_to_inference, count_flops, count_params, ModelConfig, ModelWeights};

fn main() -> uwe::Result<()> {
    let config = ModelConfig::default();
    let params = count_params(&config);
    println!("layers {:?}, rep scale {}", config.layers, config.rep_scale);
    println!("parameters: train {} / inference {}", params.train, params.inference);
    for (w, h) in [(256, 256), (640, 480)] {
        let f = count_flops(&config, h, w);
        println!("{w}x{h}: {:.3} GFLOPs ({} conv MACs)", f.flops as f64 / 1e9, f.conv_macs);
    }

    let weights = convert_to_inference(&ModelWeights::random(config, 0)?)?;
    let report = run_bench(
        &weights,
        &BenchOptions {
            iters: 5,
            ..BenchOptions::default()
        },
    )?;
    println!(
        "640x480 latency: mean {:.1} ms, median {:.1} ms, p95 {:.1} ms ({:.1} FPS)",
        report.mean_ms, report.median_ms, report.p95_ms, report.fps
    );
    Ok(())
}

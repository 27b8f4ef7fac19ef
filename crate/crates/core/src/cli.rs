//! Command-line front end. The `uwe` binary is a thin wrapper around [`run`].
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 weight mode, 4 image shape,
//! 5 file format or configuration.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bench::{run_bench, BenchOptions};
use crate::error::{Error, Result};
use crate::image_io::{read_image, write_image};
use crate::loss::{total_loss, IdentityFeatures, LossBreakdown};
use crate::metrics::{ciede2000_image, psnr, ssim, uciqe, uiqm_components, UciqeComponents, UiqmComponents};
use crate::pipeline::{convert_to_inference, enhance, Mode, ModelConfig, ModelWeights};
use crate::weights_file::{load_weights, save_weights};

/// Caps the worker count for directory batches.
pub const THREADS_ENV: &str = "UWE_THREADS";

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_MODE: i32 = 3;
pub const EXIT_SHAPE: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "uwe", version, about = "Underwater image enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Train,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Passthrough,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance one image, or every PNG/PPM file in a directory.
    Enhance {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Required weight form; `auto` accepts either.
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
    },
    /// Collapse training-form weights into the single-kernel inference form.
    Rep {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Full-reference report as JSON.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// No-reference report (UIQM, UCIQE) as JSON.
    NrMetrics {
        #[arg(long)]
        input: PathBuf,
    },
    /// Training-objective breakdown as JSON.
    Loss {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Time the inference model on a seeded random image.
    Bench {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write training-form weights for the default configuration.
    InitDemo {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Preset::Random)]
        preset: Preset,
    },
}

#[derive(Debug, Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub uciqe: UciqeComponents,
    pub uiqm: f64,
    pub ciede2000: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Serialize)]
pub struct NrReport {
    pub uiqm: f64,
    pub uiqm_components: UiqmComponents,
    pub uciqe: UciqeComponents,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Mode(_) => EXIT_MODE,
        Error::Shape(_) | Error::Degenerate(_) => EXIT_SHAPE,
        Error::Format(_) | Error::Config(_) => EXIT_FORMAT,
    }
}

/// Parses `args` (including the program name), executes, and returns the
/// process exit code. Reports go to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports contain only finite numbers and strings");
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Enhance {
            weights,
            input,
            output,
            mode,
        } => {
            let weights = load_weights(&weights)?;
            check_mode(&weights, mode)?;
            if input.is_dir() {
                let n = enhance_dir(&weights, &input, &output)?;
                writeln!(out, "enhanced {n} images into {}", output.display()).map_err(|e| Error::io("<stdout>", e))
            } else {
                enhance_file(&weights, &input, &output)
            }
        }
        Command::Rep { weights, output } => {
            let train = load_weights(&weights)?;
            let infer = convert_to_inference(&train)?;
            save_weights(&infer, &output)?;
            writeln!(out, "{}", param_line(train.param_count(), infer.param_count()))
                .map_err(|e| Error::io("<stdout>", e))
        }
        Command::Metrics { reference, test } => {
            let (r, t) = (read_image(&reference)?, read_image(&test)?);
            emit(out, &metric_report(&r, &t)?)
        }
        Command::NrMetrics { input } => {
            let image = read_image(&input)?;
            let components = uiqm_components(&image)?;
            emit(
                out,
                &NrReport {
                    uiqm: components.uiqm,
                    uiqm_components: components,
                    uciqe: uciqe(&image)?,
                },
            )
        }
        Command::Loss { reference, test } => {
            let (r, t) = (read_image(&reference)?, read_image(&test)?);
            emit(out, &total_loss(&t, &r, &IdentityFeatures)?)
        }
        Command::Bench {
            weights,
            width,
            height,
            iters,
            warmup,
            seed,
        } => {
            let weights = load_weights(&weights)?;
            let opts = BenchOptions {
                width,
                height,
                iters,
                warmup,
                seed,
            };
            emit(out, &run_bench(&weights, &opts)?)
        }
        Command::InitDemo { output, seed, preset } => {
            let config = ModelConfig::default();
            let weights = match preset {
                Preset::Passthrough => ModelWeights::passthrough(config)?,
                Preset::Random => ModelWeights::random(config, seed)?,
            };
            save_weights(&weights, &output)
        }
    }
}

/// Parameter summary before and after collapsing, with the inference count
/// also given in thousands.
pub fn param_line(train: usize, inference: usize) -> String {
    format!(
        "params: train {train} -> inference {inference} ({:.2}K)",
        inference as f64 / 1e3
    )
}

pub fn metric_report(reference: &crate::Tensor, test: &crate::Tensor) -> Result<MetricReport> {
    reference.ensure_same_shape(test, "metrics")?;
    Ok(MetricReport {
        psnr: psnr(reference, test)?,
        ssim: ssim(reference, test)?,
        uciqe: uciqe(test)?,
        uiqm: uiqm_components(test)?.uiqm,
        ciede2000: ciede2000_image(reference, test)?,
        loss: total_loss(test, reference, &IdentityFeatures)?,
    })
}

fn check_mode(weights: &ModelWeights, wanted: ModeArg) -> Result<()> {
    let required = match wanted {
        ModeArg::Auto => return Ok(()),
        ModeArg::Train => Mode::Train,
        ModeArg::Inference => Mode::Inference,
    };
    if weights.mode() != required {
        return Err(Error::Mode(format!(
            "--mode {required} requested but the weight file holds {} weights",
            weights.mode()
        )));
    }
    Ok(())
}

fn enhance_file(weights: &ModelWeights, input: &Path, output: &Path) -> Result<()> {
    let image = read_image(input)?;
    write_image(&enhance(&image, weights)?, output)
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && matches!(
            path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
            Some("png" | "ppm")
        )
}

fn thread_cap() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            log::warn!("ignoring {THREADS_ENV}={raw:?}; expected a positive integer");
            None
        }
    }
}

/// Enhances every PNG/PPM file in `input`, writing same-named files into
/// `output`. Files are processed in parallel; each result depends only on
/// its own input. Returns the number of images written.
pub fn enhance_dir(weights: &ModelWeights, input: &Path, output: &Path) -> Result<usize> {
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| is_image_file(p))
        .collect();
    files.sort();
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        files.par_iter().try_for_each(|src| {
            let dst = output.join(src.file_name().expect("read_dir entries have names"));
            log::info!("{} -> {}", src.display(), dst.display());
            enhance_file(weights, src, &dst)
        })
    })?;
    Ok(files.len())
}

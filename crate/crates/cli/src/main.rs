//! `cuenet`: crop, inference and cost-analysis drivers.
//!
//! Exit codes: 0 success, 2 bad input, 3 config or shape mismatch, 4 failed check.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cuenet", version, about = "Crop-driven video classifier and attention cost tooling")]
struct Cli {
    /// Worker threads; 1 runs every kernel sequentially.
    #[arg(long, global = true, env = "CUENET_THREADS", default_value_t = 1)]
    threads: usize,
    /// Overrides the configured precision.
    #[arg(long, global = true)]
    precision: Option<PrecisionArg>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum KindArg {
    #[value(name = "self")]
    SelfAttention,
    Meaa,
    Eaa,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// `key=value` model config; missing keys take the preset's values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Attention in the global block.
    #[arg(long, value_enum)]
    attention: Option<KindArg>,
    /// Attention in the local blocks.
    #[arg(long, value_enum)]
    local_attention: Option<KindArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Crop a video to the union of its person boxes.
    Crop {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Cropped CTF1 tensor.
        #[arg(long)]
        out: PathBuf,
        /// JSON summary; printed to stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Classify a video.
    Infer {
        #[arg(long)]
        video: PathBuf,
        /// Person boxes; without them the whole frame is used.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// CWC1 weights; seeded initialization when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// JSON result; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time pooled attention over a sweep of token counts.
    Bench {
        #[arg(long, value_enum, default_value_t = KindArg::Meaa)]
        kind: KindArg,
        /// Comma-separated token counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1024usize, 2048, 4096, 8192, 16384, 32768])]
        sweep: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Fail unless a line through (n, median time) reaches this R².
        #[arg(long)]
        min_r2: Option<f64>,
        /// Fail unless t(n)/t(n/2) at the last sweep point reaches this ratio.
        #[arg(long)]
        min_ratio: Option<f64>,
        /// CSV output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-stage multiply-add table, checked against an instrumented run.
    Flops {
        #[command(flatten)]
        model: ModelArgs,
        /// Skip the instrumented forward pass.
        #[arg(long)]
        no_verify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: u64,
        #[arg(long, default_value_t = cuenet_core::analysis::gradcheck::DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = cuenet_core::analysis::gradcheck::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick end-to-end sanity checks.
    Selftest,
    /// Write seeded initial weights.
    InitWeights {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cuenet: {e}");
            ExitCode::from(e.code())
        }
    }
}

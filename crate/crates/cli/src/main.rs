//! `cps` — single-shot color photometric stereo from the command line.
//!
//! Each reconstruction stage is addressable on its own (`synth`,
//! `decrosstalk`, `calibrate`, `reconstruct`, `integrate`, `evaluate`),
//! `pipeline` runs a whole configured case end to end, and `bench` drives a
//! sweep of synthetic cases and aggregates the metric curves. All commands
//! exit 0 on success and write machine-readable JSON (plus CSV for sweeps).

mod bench;
mod stages;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cps", version, about = "Single-shot color photometric stereo toolkit")]
struct Cli {
    /// Schedule all internally parallel work on the current thread.
    /// Results are identical either way; this only trades speed.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a standard synthetic sweep (images, ground truth, manifest).
    Synth(stages::SynthArgs),
    /// Estimate or apply a 3x3 channel de-crosstalk correction.
    Decrosstalk(stages::DecrosstalkArgs),
    /// Self-calibrate the three light positions from one image and a proxy.
    Calibrate(stages::CalibrateArgs),
    /// Recover per-pixel chromaticity, albedo, and normals.
    Reconstruct(stages::ReconstructArgs),
    /// Integrate a normal map into depth and export a mesh.
    Integrate(stages::IntegrateArgs),
    /// Compare reconstruction outputs against ground truth.
    Evaluate(stages::EvaluateArgs),
    /// Run decrosstalk -> calibrate -> reconstruct -> integrate -> evaluate
    /// from a TOML config file.
    Pipeline(bench::PipelineArgs),
    /// Run the pipeline over a sweep of cases and tabulate metric curves.
    Bench(bench::BenchArgs),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    cps_core::exec::set_sequential(cli.sequential);
    match cli.command {
        Command::Synth(args) => stages::synth(&args),
        Command::Decrosstalk(args) => stages::decrosstalk(&args),
        Command::Calibrate(args) => stages::calibrate(&args),
        Command::Reconstruct(args) => stages::reconstruct(&args),
        Command::Integrate(args) => stages::integrate(&args),
        Command::Evaluate(args) => stages::evaluate(&args),
        Command::Pipeline(args) => bench::pipeline(&args),
        Command::Bench(args) => bench::bench(&args),
    }
}

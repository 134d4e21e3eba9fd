//! `rawblur` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "rawblur",
    version,
    about = "Synthesize blurry/sharp video pairs from high-frame-rate RAW sequences"
)]
struct Cli {
    /// Seed for every random draw; outputs are a pure function of it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: all cores). Never changes output.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    /// Suppress the resolved-configuration and summary lines.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a procedural scene into a RAW sequence directory.
    GenScene(GenSceneArgs),
    /// Synthesize a blur dataset from a RAW sequence.
    Synthesize(SynthesizeArgs),
    /// Fit affine noise parameters from flat-field sequences.
    EstimateNoise(EstimateNoiseArgs),
    /// PSNR/SSIM between two directories of PPM images.
    Metrics(MetricsArgs),
    /// Describe a sequence, dataset, PGM or PPM.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    /// JSON file with `scene` and `sensor` sections.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
    #[arg(long, default_value_t = 940.0)]
    pub fps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Sequence directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// raw, raw-noise, rgb or rgb-crf.
    #[arg(long)]
    pub space: String,
    /// Blurry frame period in sharp frames.
    #[arg(long = "T", visible_alias = "period")]
    pub period: usize,
    /// Exposure in sharp frames.
    #[arg(long, visible_alias = "exposure")]
    pub tau: usize,
    /// preset-a, preset-b or a JSON ISP config file.
    #[arg(long, default_value = "preset-a")]
    pub isp: String,
    /// "a,b" or "from-meta" (default for raw-noise).
    #[arg(long)]
    pub noise: Option<String>,
    /// residual restores the pre-averaging variance; full adds a whole capture's worth.
    #[arg(long, default_value = "residual")]
    pub noise_mode: String,
    /// CRF inverted by rgb-crf: identity, srgb or power:<gamma>. Defaults to the ISP's.
    #[arg(long)]
    pub crf_model: Option<String>,
    /// Start of the first exposure window, in sharp frames.
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateNoiseArgs {
    /// One flat-field sequence directory per illumination level.
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Where to write the fitted parameters (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Machine-readable report (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

/// Bad flag values detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub struct Global {
    pub seed: u64,
    pub quiet: bool,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let global = Global {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let work = move || match cli.command {
        Command::GenScene(args) => commands::gen_scene(&global, args),
        Command::Synthesize(args) => commands::synthesize(&global, args),
        Command::EstimateNoise(args) => commands::estimate_noise(&global, args),
        Command::Metrics(args) => commands::metrics(&global, args),
        Command::Inspect(args) => commands::inspect(&global, args),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()?
            .install(work),
        None => work(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

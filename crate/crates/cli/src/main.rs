//! `dynsplat` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dynsplat", version, about = "Dynamic Gaussian splatting for single-viewpoint video")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fixed-order reductions: bit-identical runs for a fixed thread count.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Build the holistic initial point cloud and write it as PLY.
    Init(InitArgs),
    /// Train on a scene and write logs, checkpoints and metrics.
    Train(TrainArgs),
    /// Render a checkpoint at a time or frame to color and depth PNGs.
    Render(RenderArgs),
    /// Score a checkpoint, or a second dataset, against a scene.
    Eval(EvalArgs),
    /// Measure render throughput on a fixed synthetic scene.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Motion {
    Rigid,
    Pulsation,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub gaussians: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    #[arg(long, value_enum, default_value_t = Motion::Rigid)]
    pub motion: Motion,
    #[arg(long, default_value_t = 0.15)]
    pub amplitude: f64,
    /// Focal length in pixels (default: image width).
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    pub depth: f64,
    /// Masked tool rectangle `x0,y0,x1,y1`.
    #[arg(long, value_parser = parse_rect)]
    pub tool: Option<[usize; 4]>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Manifest file or scene directory.
    #[arg(long)]
    pub scene: PathBuf,
    /// Output PLY path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint instead of initializing.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene providing the camera.
    #[arg(long)]
    pub scene: PathBuf,
    /// Normalized time in [0, 1]; uses the first frame's camera.
    #[arg(long, required_unless_present = "frame", conflicts_with = "frame")]
    pub time: Option<f64>,
    /// Frame index; uses that frame's camera and time.
    #[arg(long)]
    pub frame: Option<usize>,
    /// Color PNG path.
    #[arg(long)]
    pub out: PathBuf,
    /// 16-bit depth PNG path (default: `<out>` with a `_depth` suffix).
    #[arg(long)]
    pub depth_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Checkpoint to render and score.
    #[arg(long, required_unless_present = "against", conflicts_with = "against")]
    pub checkpoint: Option<PathBuf>,
    /// Another dataset with the same frames, scored image by image.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Write the metrics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2000)]
    pub gaussians: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Also time the backward pass.
    #[arg(long)]
    pub backward: bool,
}

fn parse_rect(text: &str) -> Result<[usize; 4], String> {
    let values = text.split(',').map(|v| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"))).collect::<Result<Vec<_>, _>>()?;
    let rect: [usize; 4] = values.try_into().map_err(|_| "expected four values x0,y0,x1,y1".to_string())?;
    if rect[0] >= rect[2] || rect[1] >= rect[3] {
        return Err("rectangle must have x0 < x1 and y0 < y1".into());
    }
    Ok(rect)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

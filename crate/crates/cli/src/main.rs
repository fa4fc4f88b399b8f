//! `lilo`: batch LiDAR odometry over KITTI-format frame directories.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use lilo_core::odom::FeatureGroupMode;
use lilo_core::pipeline::{FilterRoute, SensorProfile};

#[derive(Parser)]
#[command(name = "lilo", version, about = "Spherical range image LiDAR odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a trajectory over a directory of velodyne `.bin` frames.
    Run(RunArgs),
    /// Score an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Write the range image of one frame as a PGM.
    DumpSri(DumpArgs),
    /// Write the edge, surface and ground clouds of one frame as a colored PLY.
    DumpFeatures(DumpArgs),
}

/// Settings shared by every command that processes frames. Precedence:
/// profile defaults, then the config file, then explicit flags.
#[derive(Args, Clone)]
struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "hdl64")]
    profile: SensorProfile,
    /// Range image width in pixels.
    #[arg(long, value_parser = PossibleValuesParser::new(["360", "720", "1024"]).map(|s| s.parse::<usize>().expect("listed value")))]
    resolution: Option<usize>,
    /// Feature groups used for registration.
    #[arg(long)]
    features: Option<FeatureGroupMode>,
    /// Segmentation route.
    #[arg(long)]
    filter: Option<FilterRoute>,
}

#[derive(Args)]
struct RunArgs {
    /// Frame directory, or a KITTI sequence directory with `velodyne/`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    settings: Settings,
    /// KITTI `calib.txt`; poses are then written for the camera frame like
    /// the KITTI ground truth.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Write every range image under `OUTPUT/sri/`.
    #[arg(long)]
    dump_sri: bool,
    /// Write every frame's feature clouds under `OUTPUT/features/`.
    #[arg(long)]
    dump_features: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Use 10/20/50 m segments instead of the KITTI 100..800 m ladder.
    #[arg(long)]
    short_ladder: bool,
    /// Report directory; defaults to the directory of the estimate.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    /// One velodyne `.bin` frame.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    settings: Settings,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::DumpSri(a) => commands::dump_sri(&a),
        Command::DumpFeatures(a) => commands::dump_features(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

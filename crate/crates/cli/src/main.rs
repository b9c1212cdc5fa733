use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod settings;

use settings::Settings;

/// Learned visual-inertial odometry at desk scale: synthetic data, training,
/// evaluation, Kalman bounds and closed-loop landing.
#[derive(Parser, Debug)]
#[command(name = "deepvio", version)]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with train and test splits.
    Gen(GenArgs),
    /// Train the fusion model.
    Train(TrainArgs),
    /// Evaluate an estimator open loop on a dataset.
    Eval(EvalArgs),
    /// Compare against the steady-state Kalman filter bound.
    Bound(BoundArgs),
    /// Fly the closed-loop landing mission.
    Fly(FlyArgs),
    /// Collect the summaries of earlier runs into one report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Flight length, s.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Fraction of frames to zero and flag as corrupted.
    #[arg(long)]
    pub corrupt: Option<f64>,
    /// Fraction of observations in the training split.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`, or a single EuRoC-style layout.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Observations per truncated-backpropagation sequence.
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Noise on the teacher-forced previous position, m.
    #[arg(long)]
    pub prev_noise: Option<f64>,
    /// `sigma` (learned weighting) or `beta` (fixed weighting).
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the L1 norm in the loss terms.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Continue training from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `learned` or `passthrough` (ground truth, for checking the pipeline).
    #[arg(long)]
    pub estimator: Option<String>,
    /// Fail unless the translation RMSE is below this, m.
    #[arg(long)]
    pub assert_rmse: Option<f64>,
    /// Fail unless the translation RMSE is below this fraction of the
    /// trajectory's bounding-box diagonal.
    #[arg(long)]
    pub assert_rmse_fraction: Option<f64>,
    /// Fail unless the IMU-only branch ran exactly on the corrupted frames
    /// and those frames are not estimated better than the clean ones.
    #[arg(long)]
    pub assert_fallback: bool,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    /// Check the scalar filter against its analytic fixed point and exit.
    #[arg(long)]
    pub self_test: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Acceleration noise density of the constant-velocity model, m^2/s^3.
    #[arg(long)]
    pub accel_psd: Option<f64>,
    /// Position fix noise, m. Defaults to one ground sample at 2 m altitude.
    #[arg(long)]
    pub meas_sigma: Option<f64>,
    /// Monte Carlo runs for the filter consistency check; 0 skips it.
    #[arg(long)]
    pub mc_runs: Option<usize>,
    /// Fail unless the Monte Carlo position std is within this relative
    /// error of the steady-state prediction.
    #[arg(long)]
    pub assert_consistency: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FlyArgs {
    /// Mission file; the standard landing mission when absent.
    #[arg(long)]
    pub mission: Option<PathBuf>,
    /// `truth`, `kf` or `learned`.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub kf_accel_psd: Option<f64>,
    #[arg(long)]
    pub kf_meas_sigma: Option<f64>,
    /// Override the mission's frame corruption fraction.
    #[arg(long)]
    pub corrupt: Option<f64>,
    /// Fail unless the vehicle lands within this distance of the pad, m.
    #[arg(long)]
    pub assert_landing: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Output directory of an earlier run; repeatable.
    #[arg(long = "input")]
    pub inputs: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("assertion failed: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Vec<String>> {
    let name = match &cli.command {
        Command::Gen(_) => "gen",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Bound(_) => "bound",
        Command::Fly(_) => "fly",
        Command::Report(_) => "report",
    };
    let mut s = Settings::new(cli.config.as_deref(), name)?;
    let seed = s.value("seed", cli.seed, 7)?;
    let out = s.path("out", cli.out)?.unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Gen(a) => commands::gen(s, a, seed, &out),
        Command::Train(a) => commands::train(s, a, seed, &out),
        Command::Eval(a) => commands::eval(s, a, &out),
        Command::Bound(a) => commands::bound(s, a, seed, &out),
        Command::Fly(a) => commands::fly(s, a, seed, &out),
        Command::Report(a) => commands::report(s, a, &out),
    }
}

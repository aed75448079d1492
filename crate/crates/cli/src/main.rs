//! `lbac`: train, certify and inspect LBAC controllers, and run the
//! CLF-CBF-QP baseline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lbac_core::Error;

#[derive(Debug, Parser)]
#[command(name = "lbac", version, about = "Lyapunov barrier actor-critic toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// `section.key=value`, applied in order after the file.
    #[arg(long = "override", value_name = "K=V")]
    pub overrides: Vec<String>,
    /// Replaces the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the configured output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    /// Checkpoint set directory; the latest one under the output directory
    /// when omitted.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train policy and critic, writing metrics and checkpoint sets.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Lemma 1, decrease-condition and level-separation reports for a
    /// checkpoint. Exits 0 only when the first two are satisfied.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// Critic value grid over positions plus the level-set polyline.
    Contour {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
        /// Grid points along x; `validate.contour_nx` when omitted.
        #[arg(long)]
        nx: Option<usize>,
        /// Grid points along y; `validate.contour_ny` when omitted.
        #[arg(long)]
        ny: Option<usize>,
        /// Level of the polyline; `train.c_hat` when omitted.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Policy rollouts from given or sampled starts.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
        /// Start position `x,y` at rest; repeatable.
        #[arg(long = "start", value_name = "X,Y", value_parser = parse_start)]
        starts: Vec<[f64; 2]>,
    },
    /// CLF-CBF-QP controller over a grid of starts.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Starts per axis; `qp.grid_n` when omitted.
        #[arg(long)]
        grid_n: Option<usize>,
    },
}

fn parse_start(text: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [x, y] = parts.as_slice() else {
        return Err(format!("expected X,Y, got '{text}'"));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("'{s}': {e}"));
    let p = [num(x)?, num(y)?];
    if !p.iter().all(|v| v.is_finite()) {
        return Err(format!("start '{text}' is not finite"));
    }
    Ok(p)
}

/// 2 for bad inputs, 3 for a training abort, 1 otherwise.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Checkpoint(_) | Error::InitRegion(_) => 2,
        Error::TrainingAborted { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common } => commands::train(&common),
        Command::Validate { common, ckpt } => commands::validate(&common, &ckpt),
        Command::Contour {
            common,
            ckpt,
            nx,
            ny,
            level,
        } => commands::contour(&common, &ckpt, nx, ny, level),
        Command::Rollout { common, ckpt, starts } => commands::rollout(&common, &ckpt, &starts),
        Command::Baseline { common, grid_n } => commands::baseline(&common, grid_n),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

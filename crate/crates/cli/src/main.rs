use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dsk3dom::app::{self, EvalOptions};
use dsk3dom::eval::ThresholdGrid;
use dsk3dom::grid::Thresholds;

/// Evidential 3-D dynamic occupancy mapping on synthetic LiDAR.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario file into a measurement log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter over a measurement log, writing snapshots and a manifest.
    Map {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score snapshots against the scenario's ground truth.
    Eval {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cells with more unknown mass than this are left out.
        #[arg(long, default_value_t = 0.5)]
        zeta0: f64,
        /// Number of evenly spaced ROC thresholds; 0 uses every distinct score.
        #[arg(long, default_value_t = 101)]
        thresholds: usize,
        /// First frame index to score.
        #[arg(long, default_value_t = 0)]
        first_frame: usize,
    },
    /// Write the occupied cells of one snapshot as a colored PLY point cloud.
    ExportVoxels {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        zeta0: f64,
        #[arg(long, default_value_t = 0.5)]
        zeta1: f64,
        #[arg(long, default_value_t = 0.5)]
        zeta2: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DSK3DOM_LOG", "info")).init();
    match Cli::parse().command {
        Command::Simulate { scenario, out } => {
            app::cmd_simulate(&scenario, &out)?;
        }
        Command::Map { config, log, out } => {
            app::cmd_map(&config, &log, &out)?;
        }
        Command::Eval {
            snapshots,
            scenario,
            out,
            zeta0,
            thresholds,
            first_frame,
        } => {
            let thresholds = match thresholds {
                0 => ThresholdGrid::Scores,
                n if n < 2 => anyhow::bail!("--thresholds must be 0 or at least 2"),
                n => ThresholdGrid::Uniform(n),
            };
            let opts = EvalOptions {
                zeta0,
                thresholds,
                first_frame,
            };
            let result = app::cmd_eval(&snapshots, &scenario, &out, &opts)?;
            println!("auc_o {} auc_d {}", result.roc_o.auc, result.roc_d.auc);
        }
        Command::ExportVoxels {
            snapshot,
            zeta0,
            zeta1,
            zeta2,
            out,
        } => {
            let n = app::cmd_export_voxels(&snapshot, Thresholds { zeta0, zeta1, zeta2 }, &out)?;
            println!("{n} voxels");
        }
    }
    Ok(())
}

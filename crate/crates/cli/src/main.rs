//! `neurite-recon`: synthetic phantoms, loss evaluation, mask-to-SWC
//! reconstruction and connectivity scoring.
//!
//! Exit status: 0 on success, 2 for invalid arguments, configuration or
//! inputs that do not fit together, 1 for any other failure.

mod args;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{EmbeddingArgs, EvalArgs, LossArgs, PatchArgs, PhantomArgs, ReconArgs};

/// Marks an error as a validation failure (exit status 2).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "neurite-recon", version, about = "Neurite reconstruction from voxel embeddings")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true, env = "NEURITE_RECON_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic tube phantom with ground truth and oracle embeddings.
    Phantom {
        #[command(flatten)]
        phantom: PhantomArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rasterize an SWC file into a label volume.
    Rasterize {
        #[arg(long)]
        swc: PathBuf,
        /// Take grid extents and voxel size from this volume.
        #[arg(long, conflicts_with_all = ["dims", "voxel_size"])]
        like: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', num_args = 1..=3, required_unless_present = "like")]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', num_args = 1..=3)]
        voxel_size: Option<Vec<f64>>,
        /// Give every tree its own label instead of 1.
        #[arg(long)]
        per_component: bool,
        #[arg(short, long)]
        out: PathBuf,
        /// Rasterization report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate the embedding loss on volumes.
    Loss {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Single-channel foreground probabilities.
        #[arg(long)]
        probs: PathBuf,
        /// Foreground truth mask.
        #[arg(long)]
        mask: PathBuf,
        #[command(flatten)]
        loss: LossArgs,
        #[command(flatten)]
        patch: PatchArgs,
        /// Breakdown report (JSON); stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write the embedding gradient as a volume.
        #[arg(long)]
        grad_out: Option<PathBuf>,
        /// Write the probability gradient as a volume.
        #[arg(long)]
        prob_grad_out: Option<PathBuf>,
    },
    /// Compare the analytic loss gradient with finite differences on random instances.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cube edge of each instance in voxels.
        #[arg(long, default_value_t = 6)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        embedding_dim: usize,
        /// Largest number of labelled instances.
        #[arg(long, default_value_t = 4)]
        max_instances: u32,
        #[arg(long, default_value_t = 4)]
        patch: usize,
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[command(flatten)]
        loss: LossArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct SWC trees from a mask and an embedding field.
    Reconstruct {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        recon: ReconArgs,
        #[arg(short, long)]
        out: PathBuf,
        /// Run report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the micro-segment labels.
        #[arg(long)]
        segments_out: Option<PathBuf>,
    },
    /// Count disconnections and false merges against a reference SWC.
    EvalConnectivity {
        #[arg(long, required_unless_present = "gt_dir", conflicts_with = "gt_dir")]
        gt: Option<PathBuf>,
        #[arg(long, required_unless_present = "pred_dir", conflicts_with = "pred_dir")]
        pred: Option<PathBuf>,
        /// Directory of reference SWC files (batch mode).
        #[arg(long, requires = "pred_dir")]
        gt_dir: Option<PathBuf>,
        /// Directory of predicted SWC files with matching names.
        #[arg(long, requires = "gt_dir")]
        pred_dir: Option<PathBuf>,
        /// Evaluation box from this volume's grid instead of the forests' extent.
        #[arg(long)]
        volume: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Voxel segmentation metrics between two masks.
    EvalSeg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Phantom, oracle embedding, reconstruction and evaluation in one run.
    Pipeline {
        #[command(flatten)]
        phantom: PhantomArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        recon: ReconArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Also write labels, mask, field and segments.
        #[arg(long)]
        write_volumes: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use neurite_recon::volume::VolumeError;
    let validation = e.chain().any(|c| {
        c.is::<Invalid>()
            || matches!(
                c.downcast_ref::<VolumeError>(),
                Some(VolumeError::ShapeMismatch(_) | VolumeError::InvalidDims(_))
            )
    });
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

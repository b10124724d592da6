//! Command-line front end: dataset synthesis, training, inference,
//! evaluation, ablation sweeps and parameter reports.

mod ablate;
mod data;
mod infer;
mod params;
mod settings;
mod table;
mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use ablate::{axis_values, Axis};
pub use settings::{load_settings, Settings};
pub use table::Table;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] msgnn::error::Error),
    #[error("{0}")]
    Usage(String),
    #[error("csv output {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Csv { .. } => "io",
        }
    }

    /// `error:<kind>:<message>` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        let kind = self.kind();
        // Some messages already open with their family name.
        let msg = msg.strip_prefix(&format!("{kind}: ")).unwrap_or(&msg);
        format!("error:{kind}:{}", msg.trim())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "msgnn", version, about = "Multi-scale patch graph deraining")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add synthetic rain to clean PNGs, writing rain/, norain/ and manifest.tsv.
    Synth {
        #[arg(long)]
        clean_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Pairs to write; 0 uses every clean image once. Clean images are
        /// reused cyclically when count exceeds them.
        #[arg(long, default_value_t = 0)]
        count: usize,
        #[arg(long, default_value_t = 0.02)]
        density: f64,
        /// Degrees from vertical.
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        angle: f64,
        /// Streak length in pixels.
        #[arg(long, default_value_t = 9)]
        length: usize,
        #[arg(long, default_value_t = 0.8)]
        intensity: f64,
        /// Image i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write procedural clean scenes to use as backgrounds for synth.
    GenClean {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 25)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Image i uses scene seed 1000 * seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on a paired dataset.
    Train {
        /// Directory with rain/ and norain/.
        #[arg(long)]
        data: PathBuf,
        /// key=value file with model and training settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory for metrics.tsv, steps.tsv and checkpoint.ckpt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Extra key=value overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Derain one image.
    Derain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// External rainy exemplar; defaults to the input itself.
        #[arg(long)]
        exemplar: Option<PathBuf>,
        /// Also write the estimated rain layer.
        #[arg(long)]
        residual: Option<PathBuf>,
        /// Also write input | derained | rain layer side by side.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Require the checkpoint to match this config's model settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a checkpoint on a paired dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output stem; writes <report>.txt and <report>.csv.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        exemplar: Option<PathBuf>,
        /// Only the held-out split (last 20% by name).
        #[arg(long)]
        held_out: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train and score one short run per value of an ablation axis.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values; each axis has a default set.
        #[arg(long)]
        values: Option<String>,
        /// Optimizer steps per run.
        #[arg(long, default_value_t = 50)]
        budget: u64,
        /// Directory for <axis>.txt and <axis>.csv.
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base settings shared by every run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Print the parameter count and a per-module breakdown.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            clean_dir,
            out_dir,
            count,
            density,
            angle,
            length,
            intensity,
            seed,
        } => {
            let params = msgnn::image::RainParams {
                density,
                angle_deg: angle,
                length_px: length,
                intensity,
                seed,
            };
            data::synth(&clean_dir, &out_dir, count, params)
        }
        Command::GenClean {
            out_dir,
            count,
            size,
            seed,
        } => data::gen_clean(&out_dir, count, size, seed),
        Command::Train {
            data,
            config,
            out,
            seed,
            resume,
            sets,
            max_steps,
        } => train::run(train::Args {
            data,
            config,
            out,
            seed,
            resume,
            sets,
            max_steps,
        }),
        Command::Derain {
            input,
            checkpoint,
            output,
            exemplar,
            residual,
            grid,
            config,
        } => infer::derain(infer::DerainArgs {
            input,
            checkpoint,
            output,
            exemplar,
            residual,
            grid,
            config,
        }),
        Command::Eval {
            data,
            checkpoint,
            report,
            exemplar,
            held_out,
            config,
        } => infer::eval(infer::EvalArgs {
            data,
            checkpoint,
            report,
            exemplar,
            held_out,
            config,
        }),
        Command::Ablate {
            data,
            axis,
            values,
            budget,
            out,
            seed,
            config,
            sets,
        } => ablate::run(ablate::Args {
            data,
            axis,
            values,
            budget,
            out,
            seed,
            config,
            sets,
        }),
        Command::Params { config, sets } => params::run(config.as_deref(), &sets),
    }
}

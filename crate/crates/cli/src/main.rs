//! Batch command-line interface for the thermal face pipeline.
//!
//! Five subcommands cover the workflow end to end: `synth` writes a labeled
//! synthetic corpus, `transform` previews the image-space stages, `train`
//! fits and saves a model, `identify` ranks subjects for new images, and
//! `eval` scores the pipeline by 3-fold cross-validation.
//!
//! Configuration comes from a key=value file named by `--config` or the
//! `THERMOFACE_CONFIG` environment variable; built-in defaults apply when
//! neither is set, and command flags override file values.
//!
//! Exit codes: 0 on success, 1 for input or validation problems, 2 when a
//! numerical stage fails (divergent training, degenerate polar radius).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thermoface::evaluation::TransformVariant;
use thermoface::imaging::CorpusSpec;

use crate::commands::CliError;

#[derive(Parser)]
#[command(name = "thermoface", version, about = "Thermal face recognition pipeline")]
struct Cli {
    /// Config file of key=value lines; $THERMOFACE_CONFIG is the fallback
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run images through one preprocessing variant and save the results
    Transform {
        /// Input images (PGM or PNG)
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        /// raw, line_skeletal, polar, or polar_line_skeletal
        #[arg(long, value_parser = parse_variant)]
        variant: Option<TransformVariant>,

        /// Output directory; by default each result lands next to its input
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },

    /// Fit the eigenspace and classifier from a labeled manifest
    Train {
        /// Manifest CSV; image paths in it are relative to its directory
        manifest: PathBuf,

        /// Where to write the model file
        #[arg(long, default_value = "model.thf")]
        out: PathBuf,

        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },

    /// Rank subjects for images against a trained model
    Identify {
        /// Trained model file
        model: PathBuf,

        /// Images to identify
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        /// How many ranked candidates to print per image
        #[arg(long, default_value_t = 3)]
        top: usize,
    },

    /// Score the pipeline by 3-fold cross-validation and write report CSVs
    Eval {
        /// Manifest CSV; image paths in it are relative to its directory
        manifest: PathBuf,

        /// Directory for the report CSVs
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,

        /// Evaluate one specific variant instead of the configured one
        #[arg(long, value_parser = parse_variant, conflicts_with = "all_variants")]
        variant: Option<TransformVariant>,

        /// Compare all four preprocessing variants on shared folds
        #[arg(long)]
        all_variants: bool,

        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },

    /// Generate a synthetic face corpus with a manifest
    Synth {
        /// Output directory for the images and manifest.csv
        out_dir: PathBuf,

        /// Number of distinct subjects
        #[arg(long, default_value_t = 8)]
        subjects: usize,

        /// Images per subject
        #[arg(long, default_value_t = 25)]
        per_subject: usize,

        /// Comma-separated rotation angles in degrees
        #[arg(long, default_value = "0,15,-15,45,-45", allow_hyphen_values = true)]
        rotations: String,

        /// Comma-separated scale factors
        #[arg(long, default_value = "0.9,1.0,1.1")]
        scales: String,

        /// Base image side in pixels
        #[arg(long, default_value_t = 128)]
        size: usize,

        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_variant(s: &str) -> Result<TransformVariant, String> {
    TransformVariant::parse(s).ok_or_else(|| {
        format!("unknown variant {s:?}; use raw, line_skeletal, polar, or polar_line_skeletal")
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = commands::load_cli_config(cli.config.as_deref())?;
    match cli.command {
        Command::Transform {
            inputs,
            variant,
            out_dir,
        } => commands::cmd_transform(
            &cfg,
            &inputs,
            variant.unwrap_or(cfg.variant),
            out_dir.as_deref(),
        ),
        Command::Train {
            manifest,
            out,
            seed,
        } => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            commands::cmd_train(&cfg, &manifest, &out)
        }
        Command::Identify { model, inputs, top } => commands::cmd_identify(&model, &inputs, top),
        Command::Eval {
            manifest,
            out_dir,
            variant,
            all_variants,
            seed,
        } => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            commands::cmd_eval(
                &cfg,
                &manifest,
                &out_dir,
                variant.unwrap_or(cfg.variant),
                all_variants,
            )
        }
        Command::Synth {
            out_dir,
            subjects,
            per_subject,
            rotations,
            scales,
            size,
            seed,
        } => {
            let spec = CorpusSpec {
                subjects,
                per_subject,
                rotations_deg: commands::parse_list(&rotations, "rotations")?,
                scales: commands::parse_list(&scales, "scales")?,
                size,
                seed: seed.unwrap_or(cfg.seed),
            };
            commands::cmd_synth(&out_dir, &spec)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

//! The five batch commands and their shared error surface.
//!
//! Every command returns [`CliError`]; `main` maps that to the process exit
//! code. Input and validation problems exit 1, while failures of the numeric
//! stages themselves (training divergence, a polar radius too small to span)
//! exit 2 so scripts can tell bad arguments from bad arithmetic.

use std::fs;
use std::path::{Path, PathBuf};

use thermoface::classifier::{self, MlpError};
use thermoface::config::{self, ConfigError, PipelineConfig};
use thermoface::eigenspace::{self, EigenError};
use thermoface::evaluation::{self, EvalError, ImagePipeline, TransformVariant};
use thermoface::imaging::{self, CorpusSpec, ImageError, ManifestError};
use thermoface::linefeat::LineFeatError;
use thermoface::model::{self, ModelError, ModelFile};
use thermoface::polar::PolarError;
use thiserror::Error;

/// Environment variable consulted for the config path when `--config` is
/// absent.
pub const CONFIG_ENV: &str = "THERMOFACE_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    LineFeat(#[from] LineFeatError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{failures} of {total} inputs failed")]
    Partial {
        failures: usize,
        total: usize,
        code: u8,
    },
}

impl CliError {
    /// 2 for failures of the arithmetic itself, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        let numeric = match self {
            CliError::Eval(e) => matches!(
                e,
                EvalError::Polar(PolarError::DegenerateRadius { .. })
                    | EvalError::Mlp(MlpError::NonFiniteLoss { .. })
            ),
            CliError::Mlp(m) => matches!(m, MlpError::NonFiniteLoss { .. }),
            CliError::Partial { code, .. } => return *code,
            _ => false,
        };
        if numeric {
            2
        } else {
            1
        }
    }
}

/// Loads the pipeline config: `--config` wins, then `THERMOFACE_CONFIG`,
/// then built-in defaults. A path named by either must exist.
pub fn load_cli_config(flag: Option<&Path>) -> Result<PipelineConfig, CliError> {
    if let Some(path) = flag {
        return Ok(config::load_config(path)?);
    }
    match std::env::var_os(CONFIG_ENV) {
        Some(path) => Ok(config::load_config(Path::new(&path))?),
        None => Ok(PipelineConfig::default()),
    }
}

/// Parses a comma-separated list of finite numbers, as used by the synth
/// rotation and scale flags.
pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        match part.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(CliError::Usage(format!("bad {what} value {part:?}")));
            }
        }
    }
    Ok(out)
}

/// Directory that relative manifest entries resolve against.
fn manifest_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn subject_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("subject_{i:02}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    model::atomic_write(path, bytes).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Transforms each input through `variant` and writes `{stem}.{variant}.pgm`.
/// Failures are reported per file and processing continues; any failure makes
/// the whole command fail after the loop.
pub fn cmd_transform(
    cfg: &PipelineConfig,
    inputs: &[PathBuf],
    variant: TransformVariant,
    out_dir: Option<&Path>,
) -> Result<(), CliError> {
    let bank = evaluation::resolve_mask_bank(cfg)?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    let mut failures = 0;
    let mut code = 1;
    for input in inputs {
        match transform_one(cfg, &bank, variant, input, out_dir) {
            Ok(dest) => println!("{} -> {}", input.display(), dest.display()),
            Err(err) => {
                eprintln!("{}: {err}", input.display());
                failures += 1;
                code = code.max(err.exit_code());
            }
        }
    }
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Partial {
            failures,
            total: inputs.len(),
            code,
        })
    }
}

fn transform_one(
    cfg: &PipelineConfig,
    bank: &thermoface::linefeat::MaskBank,
    variant: TransformVariant,
    input: &Path,
    out_dir: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let img = imaging::load_image(input)?;
    let stage = evaluation::transform_image(&img, variant, cfg, bank)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => manifest_dir(input),
    };
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let dest = dir.join(format!("{stem}.{}.pgm", variant.name()));
    imaging::save_image(&stage.to_image(), &dest)?;
    Ok(dest)
}

/// Fits the eigenspace and classifier and saves the model file. With a fold
/// column present only folds 0 and 1 are used, matching the evaluation's
/// train/test split; without one the whole manifest is training data.
pub fn cmd_train(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = imaging::load_manifest(manifest_path)?;
    let base_dir = manifest_dir(manifest_path);
    let exclude = if manifest.folds_assigned() {
        Some(2)
    } else {
        None
    };
    let (es, mlp, summary) = evaluation::train_model(&manifest, &base_dir, cfg, exclude)?;
    let file = ModelFile {
        config: cfg.clone(),
        labels: subject_labels(manifest.num_subjects()),
        eigenspace: es,
        mlp,
    };
    file.save(out)?;
    println!(
        "trained on {} images: {} epochs, final loss {:.6e}, eigenspace width {}",
        summary.n_train, summary.epochs, summary.final_loss, summary.k
    );
    println!("model: {}", out.display());
    Ok(())
}

/// Prints the top ranked subjects with scores for each input image. The
/// model's embedded config drives preprocessing, so results do not depend on
/// the local config file.
pub fn cmd_identify(model_path: &Path, inputs: &[PathBuf], top: usize) -> Result<(), CliError> {
    let file = ModelFile::load(model_path)?;
    let num_classes = file.labels.len();
    if top == 0 || top > num_classes {
        return Err(MlpError::InvalidK {
            k: top,
            num_classes,
        }
        .into());
    }
    let bank = evaluation::resolve_mask_bank(&file.config)?;
    let pipeline = evaluation::make_pipeline(file.config.variant, &file.config, &bank);
    for input in inputs {
        println!("{}", identify_one(&file, &pipeline, input, top)?);
    }
    Ok(())
}

fn identify_one(
    file: &ModelFile,
    pipeline: &ImagePipeline,
    input: &Path,
    top: usize,
) -> Result<String, CliError> {
    let img = imaging::load_image(input)?;
    let raw = pipeline(&img)?;
    let projected = eigenspace::project(&file.eigenspace, &raw)?;
    let pred = classifier::forward(&file.mlp, &projected)?;
    let ranked: Vec<String> = pred.ranking[..top]
        .iter()
        .map(|&class| format!("{} ({:.4})", file.labels[class], pred.scores[class]))
        .collect();
    Ok(format!("{}: {}", input.display(), ranked.join("  ")))
}

/// Fold sizes for an unassigned manifest: the config may pin them, a
/// 2000-image dataset gets the standard 700/700/600 benchmark split, and
/// anything else splits near-evenly.
fn eval_sizes(cfg: &PipelineConfig, n: usize) -> (usize, usize, usize) {
    match cfg.fold_sizes {
        Some(sizes) => sizes,
        None if n == 2000 => (700, 700, 600),
        None => evaluation::balanced_sizes(n),
    }
}

/// Runs 3-fold cross-validation and writes the report CSV atomically. With
/// `all_variants` the four preprocessings share one fold assignment and land
/// in a single comparison CSV.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    out_dir: &Path,
    variant: TransformVariant,
    all_variants: bool,
) -> Result<(), CliError> {
    let manifest = imaging::load_manifest(manifest_path)?;
    let base_dir = manifest_dir(manifest_path);
    let manifest = if manifest.folds_assigned() {
        manifest
    } else {
        let sizes = eval_sizes(cfg, manifest.len());
        evaluation::assign_folds(&manifest, sizes, cfg.seed)?
    };
    ensure_dir(out_dir)?;
    let report_path;
    if all_variants {
        let reports = evaluation::compare_transforms(&manifest, &base_dir, cfg)?;
        for r in &reports {
            print!("{}", r.summary());
        }
        report_path = out_dir.join("comparison.csv");
        write_atomic(&report_path, evaluation::comparison_csv(&reports).as_bytes())?;
    } else {
        let report = evaluation::run_cross_validation(&manifest, &base_dir, variant, cfg)?;
        print!("{}", report.summary());
        report_path = out_dir.join(format!("eval_{}.csv", variant.name()));
        write_atomic(&report_path, report.to_csv().as_bytes())?;
    }
    println!("report: {}", report_path.display());
    Ok(())
}

/// Renders the corpus and writes `manifest.csv` beside the images.
pub fn cmd_synth(out_dir: &Path, spec: &CorpusSpec) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let manifest = imaging::generate_corpus(spec, out_dir)?;
    let manifest_path = out_dir.join("manifest.csv");
    write_atomic(&manifest_path, manifest.to_csv().as_bytes())?;
    println!(
        "wrote {} images for {} subjects to {}",
        manifest.len(),
        manifest.num_subjects(),
        out_dir.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

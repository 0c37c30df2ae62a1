//! Flat `key = value` configuration shared by every pipeline stage.
//!
//! Dotted keys group settings by stage (`polar.r_min`, `mlp.momentum`).
//! Every key has a default, so an empty or missing file is a valid
//! configuration, and the text written by `to_text` parses back to an
//! identical value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classifier::MlpConfig;
use crate::evaluation::TransformVariant;
use crate::polar::PolarConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("config line {line}: expected 'key = value', got '{text}'")]
    MissingSeparator { line: usize, text: String },
    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: bad value for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Every tunable of the recognition pipeline plus the global seed.
///
/// `bank_path = None` means the built-in mask bank; `binarize_at = None`
/// keeps line images continuous; `fold_sizes = None` lets the evaluator
/// pick a near-equal split.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub polar: PolarConfig,
    pub bank_path: Option<PathBuf>,
    pub binarize_at: Option<f64>,
    pub pca_k: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub target_loss: f64,
    pub init_scale: f64,
    pub variant: TransformVariant,
    pub fold_sizes: Option<(usize, usize, usize)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            polar: PolarConfig::default(),
            bank_path: None,
            binarize_at: None,
            pca_k: 40,
            hidden: vec![25],
            learning_rate: 0.02,
            momentum: 0.9,
            max_epochs: 500,
            target_loss: 1e-3,
            init_scale: 0.5,
            variant: TransformVariant::PolarLineSkeletal,
            fold_sizes: None,
        }
    }
}

impl PipelineConfig {
    /// Canonical text form: one `key = value` line per field, fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "polar.base = {}", self.polar.base);
        match self.polar.fixed_side {
            Some(side) => {
                let _ = writeln!(s, "polar.fixed_side = {side}");
            }
            None => {
                let _ = writeln!(s, "polar.fixed_side = auto");
            }
        }
        let _ = writeln!(s, "polar.r_min = {}", self.polar.r_min);
        match &self.bank_path {
            Some(p) => {
                let _ = writeln!(s, "linefeat.bank_path = {}", p.display());
            }
            None => {
                let _ = writeln!(s, "linefeat.bank_path = builtin");
            }
        }
        match self.binarize_at {
            Some(t) => {
                let _ = writeln!(s, "linefeat.binarize_at = {t}");
            }
            None => {
                let _ = writeln!(s, "linefeat.binarize_at = off");
            }
        }
        let _ = writeln!(s, "pca.k = {}", self.pca_k);
        if self.hidden.is_empty() {
            let _ = writeln!(s, "mlp.hidden = none");
        } else {
            let list: Vec<String> = self.hidden.iter().map(ToString::to_string).collect();
            let _ = writeln!(s, "mlp.hidden = {}", list.join(","));
        }
        let _ = writeln!(s, "mlp.learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "mlp.momentum = {}", self.momentum);
        let _ = writeln!(s, "mlp.max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "mlp.target_loss = {}", self.target_loss);
        let _ = writeln!(s, "mlp.init_scale = {}", self.init_scale);
        let _ = writeln!(s, "eval.variant = {}", self.variant);
        match self.fold_sizes {
            Some((a, b, c)) => {
                let _ = writeln!(s, "eval.fold_sizes = {a},{b},{c}");
            }
            None => {
                let _ = writeln!(s, "eval.fold_sizes = auto");
            }
        }
        s
    }

    /// Range and cross-field checks; parsing calls this, and callers that
    /// mutate a config afterwards (flag overrides) should call it again.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn ensure(ok: bool, msg: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(msg.to_string()))
            }
        }
        ensure(self.polar.base >= 2, "polar.base must be at least 2")?;
        ensure(
            self.polar.r_min.is_finite() && self.polar.r_min > 0.0,
            "polar.r_min must be positive",
        )?;
        if let Some(side) = self.polar.fixed_side {
            ensure(
                crate::polar::is_power_of(side, self.polar.base),
                "polar.fixed_side must be a power of polar.base",
            )?;
        }
        if let Some(t) = self.binarize_at {
            ensure(
                t.is_finite() && t > 0.0 && t <= 1.0,
                "linefeat.binarize_at must be in (0, 1]",
            )?;
        }
        ensure(self.pca_k >= 1, "pca.k must be at least 1")?;
        ensure(
            self.hidden.iter().all(|&h| h >= 1),
            "mlp.hidden sizes must be at least 1",
        )?;
        ensure(
            self.learning_rate.is_finite() && self.learning_rate >= 0.0,
            "mlp.learning_rate must be finite and non-negative",
        )?;
        ensure(
            self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum),
            "mlp.momentum must be in [0, 1)",
        )?;
        ensure(self.max_epochs >= 1, "mlp.max_epochs must be at least 1")?;
        ensure(
            self.target_loss.is_finite() && self.target_loss >= 0.0,
            "mlp.target_loss must be finite and non-negative",
        )?;
        ensure(
            self.init_scale.is_finite() && self.init_scale > 0.0,
            "mlp.init_scale must be positive",
        )?;
        if let Some((a, b, c)) = self.fold_sizes {
            ensure(
                a >= 1 && b >= 1 && c >= 1,
                "eval.fold_sizes must all be at least 1",
            )?;
        }
        Ok(())
    }

    /// Classifier settings for a concrete network: `input` units in, the
    /// configured hidden layers, `num_classes` units out.
    pub fn mlp_config(&self, input: usize, num_classes: usize, seed: u64) -> MlpConfig {
        let mut layer_sizes = Vec::with_capacity(self.hidden.len() + 2);
        layer_sizes.push(input);
        layer_sizes.extend_from_slice(&self.hidden);
        layer_sizes.push(num_classes);
        MlpConfig {
            layer_sizes,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            max_epochs: self.max_epochs,
            target_loss: self.target_loss,
            seed,
            init_scale: self.init_scale,
        }
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: format!("{e}"),
    })
}

fn num_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|p| num(line, key, p.trim())).collect()
}

/// Parses a config text. Unknown keys are errors (they are usually typos);
/// a key given twice keeps the later value; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigError::MissingSeparator {
            line,
            text: trimmed.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "seed" => cfg.seed = num(line, key, value)?,
            "polar.base" => cfg.polar.base = num(line, key, value)?,
            "polar.fixed_side" => {
                cfg.polar.fixed_side = if value == "auto" {
                    None
                } else {
                    Some(num(line, key, value)?)
                }
            }
            "polar.r_min" => cfg.polar.r_min = num(line, key, value)?,
            "linefeat.bank_path" => {
                cfg.bank_path = if value == "builtin" {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "linefeat.binarize_at" => {
                cfg.binarize_at = if value == "off" {
                    None
                } else {
                    Some(num(line, key, value)?)
                }
            }
            "pca.k" => cfg.pca_k = num(line, key, value)?,
            "mlp.hidden" => {
                cfg.hidden = if value == "none" {
                    Vec::new()
                } else {
                    num_list(line, key, value)?
                }
            }
            "mlp.learning_rate" => cfg.learning_rate = num(line, key, value)?,
            "mlp.momentum" => cfg.momentum = num(line, key, value)?,
            "mlp.max_epochs" => cfg.max_epochs = num(line, key, value)?,
            "mlp.target_loss" => cfg.target_loss = num(line, key, value)?,
            "mlp.init_scale" => cfg.init_scale = num(line, key, value)?,
            "eval.variant" => {
                cfg.variant =
                    TransformVariant::parse(value).ok_or_else(|| ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        reason: "expected raw, line_skeletal, polar, or polar_line_skeletal"
                            .to_string(),
                    })?
            }
            "eval.fold_sizes" => {
                cfg.fold_sizes = if value == "auto" {
                    None
                } else {
                    let v: Vec<usize> = num_list(line, key, value)?;
                    if v.len() != 3 {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            reason: format!("expected three sizes, got {}", v.len()),
                        });
                    }
                    Some((v[0], v[1], v[2]))
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file. A missing file is an error here; use
/// `load_or_default` where absence should mean "all defaults".
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

/// Like `load_config`, but a file that does not exist yields the defaults.
pub fn load_or_default(path: &Path) -> Result<PipelineConfig, ConfigError> {
    if path.exists() {
        load_config(path)
    } else {
        Ok(PipelineConfig::default())
    }
}

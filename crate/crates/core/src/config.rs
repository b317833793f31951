//! TOML run configuration driving the whole pipeline.
//!
//! One file configures phantom generation, fitting, training and
//! evaluation; every key has a default, so a config file only lists
//! overrides. Individual keys can additionally be overridden with
//! dotted-path assignments (`train.epochs=20`).

use crate::corpus::CorruptionConfig;
use crate::dataset::{AugmentSpec, InputMode};
use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::nn::{TrainConfig, UNetConfig};
use crate::signal::PhantomRanges;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Width of the background-noise frame along the image border.
    pub background_frame_px: usize,
    /// Train against conventional-fit targets (the teacher pipeline) or
    /// simulator ground truth.
    pub teacher_targets: bool,
    /// Number of leading corpus samples used for normalization stats.
    pub norm_samples: usize,
    /// How many test phantoms to render as PGM panels in reports.
    pub report_panels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            background_frame_px: 8,
            teacher_targets: true,
            norm_samples: 200,
            report_panels: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub size: usize,
    #[serde(flatten)]
    pub corruption: CorruptionConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            size: 1300,
            corruption: CorruptionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mode: InputMode,
    pub corpus: CorpusConfig,
    pub phantom: PhantomRanges,
    pub fit: FitOptions,
    pub unet: UNetConfig,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20080,
            out_dir: PathBuf::from("runs/default"),
            mode: InputMode::Complex12,
            corpus: CorpusConfig::default(),
            phantom: PhantomRanges::default(),
            fit: FitOptions::default(),
            unet: UNetConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentSpec::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(Some(path), &[])
    }

    /// Load a config file (or defaults when `path` is None) and apply
    /// dotted-path overrides like `("train.epochs", "20")`.
    pub fn load_with_overrides(path: Option<&Path>, sets: &[(String, String)]) -> Result<Self> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Value::Table(Default::default()),
        };
        for (key, raw) in sets {
            apply_override(&mut value, key, raw)?;
        }
        let config: RunConfig = value
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.unet_for_mode().validate()?;
        self.train.validate()?;
        if self.corpus.size < 13 {
            return Err(Error::Config("corpus.size must be at least 13".into()));
        }
        if self.phantom.image_size != self.unet.image_size {
            return Err(Error::Config(format!(
                "phantom.image_size {} differs from unet.image_size {}",
                self.phantom.image_size, self.unet.image_size
            )));
        }
        Ok(())
    }

    /// The U-Net config with its input channels forced by the run mode.
    pub fn unet_for_mode(&self) -> UNetConfig {
        UNetConfig {
            in_channels: self.mode.channels(),
            ..self.unet
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out_dir.join("corpus")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join(format!("model_{}", self.mode.name()))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join(format!("eval_{}", self.mode.name()))
    }
}

/// Set `value[a][b][c] = parsed(raw)` for a dotted path `a.b.c`. The raw
/// string is parsed as a TOML literal when possible, else kept verbatim.
fn apply_override(value: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = value;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}' crosses a non-table value")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override '{key}' crosses a non-table value")))?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

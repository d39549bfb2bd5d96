//! Run configuration: one TOML file holding model, training, feature and
//! path settings. Every field has a default, so an empty file (or no file)
//! is the six-block L+A sentiment setup. Individual keys can be overridden
//! with `section.key=value` strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbje_core::features::MelConfig;
use tbje_core::model::{
    DropoutPlacement, ModalityConfig, Variant, ACOUSTIC_LENGTH, LINGUISTIC_LENGTH, VISUAL_LENGTH,
};
use tbje_core::training::TrainConfig;
use tbje_core::{EncoderConfig, Modality, Task};

use crate::bundle::Manifest;
use crate::error::{config_err, io_err, Result};

/// Encoder settings. Widths and padded lengths are not listed here: they
/// come from the dataset bundle the model is trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub blocks: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub dropout_block: f64,
    pub dropout_classifier: f64,
    pub dropout_placement: DropoutPlacement,
    pub modalities: Vec<Modality>,
    pub primary: Modality,
    /// Defaults to monomodal for one modality, joint otherwise.
    pub variant: Option<Variant>,
    pub task: Task,
    pub two_class_boundary: f64,
    pub positional_encoding: Vec<Modality>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            blocks: e.blocks,
            hidden: e.hidden,
            heads: e.heads,
            ff_hidden: e.ff_hidden,
            dropout_block: e.dropout_block,
            dropout_classifier: e.dropout_classifier,
            dropout_placement: e.dropout_placement,
            modalities: e.modality_list(),
            primary: e.primary,
            variant: None,
            task: e.task,
            two_class_boundary: e.two_class_boundary,
            positional_encoding: e.modalities.iter().filter(|m| m.positional_encoding).map(|m| m.modality).collect(),
        }
    }
}

impl ModelSection {
    /// Full encoder config, taking widths and lengths from `manifest`.
    pub fn encoder_config(&self, manifest: &Manifest) -> Result<EncoderConfig> {
        let modalities = self
            .modalities
            .iter()
            .map(|&m| {
                let entry = manifest.modality(m).ok_or_else(|| {
                    config_err(format!(
                        "config asks for the {m} modality but the bundle only has {}",
                        manifest.modality_letters()
                    ))
                })?;
                Ok(ModalityConfig {
                    modality: m,
                    width: entry.width,
                    length: entry.length,
                    positional_encoding: self.positional_encoding.contains(&m),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = EncoderConfig {
            blocks: self.blocks,
            hidden: self.hidden,
            heads: self.heads,
            ff_hidden: self.ff_hidden,
            dropout_block: self.dropout_block,
            dropout_classifier: self.dropout_classifier,
            dropout_placement: self.dropout_placement,
            primary: self.primary,
            variant: self.variant.unwrap_or(EncoderConfig::default_variant(modalities.len())),
            modalities,
            task: self.task,
            two_class_boundary: self.two_class_boundary,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub linguistic_length: usize,
    pub acoustic_length: usize,
    pub visual_length: usize,
    pub mel: MelConfig,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            linguistic_length: LINGUISTIC_LENGTH,
            acoustic_length: ACOUSTIC_LENGTH,
            visual_length: VISUAL_LENGTH,
            mel: MelConfig::default(),
        }
    }
}

impl FeatureSection {
    pub fn length(&self, m: Modality) -> usize {
        match m {
            Modality::Linguistic => self.linguistic_length,
            Modality::Acoustic => self.acoustic_length,
            Modality::Visual => self.visual_length,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    /// `train.seed` is the run seed; member `i` uses `seed + i`.
    pub train: TrainConfig,
    pub features: FeatureSection,
    pub paths: PathSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Optional file, then `key=value` overrides, then an optional seed.
    pub fn resolve(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if !overrides.is_empty() {
            cfg = cfg.with_overrides(overrides)?;
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        Ok(cfg)
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML and
    /// fall back to a plain string, so `model.task=sentiment-2` works
    /// without quoting.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| config_err(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| config_err(format!("override {item:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields at least one part");
            let mut node = &mut table;
            for p in parents {
                node = node
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| config_err(format!("override {key:?}: {p} is not a section")))?;
            }
            node.insert(last.to_string(), value);
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("override: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.features.mel.validate()?;
        if self.model.modalities.is_empty() {
            return Err(config_err("model.modalities is empty"));
        }
        if !self.model.modalities.contains(&self.model.primary) {
            return Err(config_err(format!("primary modality {} is not in model.modalities", self.model.primary)));
        }
        for m in Modality::ALL {
            if self.features.length(m) == 0 {
                return Err(config_err(format!("features.{m}_length must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

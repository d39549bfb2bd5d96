use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One input stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[serde(alias = "L", alias = "l")]
    Linguistic,
    #[serde(alias = "A", alias = "a")]
    Acoustic,
    #[serde(alias = "V", alias = "v")]
    Visual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Linguistic, Modality::Acoustic, Modality::Visual];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Linguistic => "linguistic",
            Modality::Acoustic => "acoustic",
            Modality::Visual => "visual",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Modality::Linguistic => 'L',
            Modality::Acoustic => 'A',
            Modality::Visual => 'V',
        }
    }

    /// Parses `"L+A+V"`-style lists.
    pub fn parse_list(s: &str) -> Result<Vec<Modality>> {
        let list: Vec<Modality> = s
            .split(['+', ','])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::Config(format!("empty modality list {s:?}")));
        }
        Ok(list)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "linguistic" | "text" => Ok(Modality::Linguistic),
            "a" | "acoustic" | "audio" => Ok(Modality::Acoustic),
            "v" | "visual" | "video" => Ok(Modality::Visual),
            _ => Err(Error::Config(format!("unknown modality {s:?}"))),
        }
    }
}

/// Classification head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "sentiment-2")]
    Sentiment2,
    #[serde(rename = "sentiment-7")]
    Sentiment7,
    #[serde(rename = "emotions-6")]
    Emotions6,
}

impl Task {
    pub fn outputs(self) -> usize {
        match self {
            Task::Sentiment2 => 2,
            Task::Sentiment7 => 7,
            Task::Emotions6 => 6,
        }
    }

    pub fn is_multi_label(self) -> bool {
        self == Task::Emotions6
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Sentiment2 => "sentiment-2",
            Task::Sentiment7 => "sentiment-7",
            Task::Emotions6 => "emotions-6",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentiment-2" => Ok(Task::Sentiment2),
            "sentiment-7" => Ok(Task::Sentiment7),
            "emotions-6" | "emotions" => Ok(Task::Emotions6),
            _ => Err(Error::Config(format!(
                "unknown task {s:?} (expected sentiment-2, sentiment-7 or emotions-6)"
            ))),
        }
    }
}

/// Monomodal blocks are attention + MLP; joint blocks add a glimpse sublayer
/// and let the primary modality drive the others' attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Monomodal,
    Joint,
}

/// Which sublayers apply block dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutPlacement {
    /// Every residual sublayer (attention, MLP, glimpse).
    #[default]
    PerSublayer,
    /// Only the (co-)attention sublayer of each block.
    AttentionOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityConfig {
    pub modality: Modality,
    /// Raw feature width entering the input projection.
    pub width: usize,
    /// Padded sequence length N; also the glimpse count of in-block glimpses.
    pub length: usize,
    pub positional_encoding: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub blocks: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub dropout_block: f64,
    pub dropout_classifier: f64,
    pub dropout_placement: DropoutPlacement,
    pub modalities: Vec<ModalityConfig>,
    pub primary: Modality,
    pub variant: Variant,
    pub task: Task,
    /// Raw sentiment below this value is the negative class of `sentiment-2`.
    pub two_class_boundary: f64,
}

pub const LINGUISTIC_WIDTH: usize = 300;
pub const ACOUSTIC_WIDTH: usize = 80;
pub const LINGUISTIC_LENGTH: usize = 50;
pub const ACOUSTIC_LENGTH: usize = 40;
pub const VISUAL_LENGTH: usize = 40;

impl Default for EncoderConfig {
    /// Six blocks of width 512 with four heads, MLP width 1024, dropout 0.1 /
    /// 0.5, linguistic modality driving the acoustic one.
    fn default() -> Self {
        Self {
            blocks: 6,
            hidden: 512,
            heads: 4,
            ff_hidden: 1024,
            dropout_block: 0.1,
            dropout_classifier: 0.5,
            dropout_placement: DropoutPlacement::PerSublayer,
            modalities: vec![
                ModalityConfig {
                    modality: Modality::Linguistic,
                    width: LINGUISTIC_WIDTH,
                    length: LINGUISTIC_LENGTH,
                    positional_encoding: true,
                },
                ModalityConfig {
                    modality: Modality::Acoustic,
                    width: ACOUSTIC_WIDTH,
                    length: ACOUSTIC_LENGTH,
                    positional_encoding: false,
                },
            ],
            primary: Modality::Linguistic,
            variant: Variant::Joint,
            task: Task::Sentiment7,
            two_class_boundary: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.hidden == 0 || self.heads == 0 || self.ff_hidden == 0 {
            return fail("hidden, heads and ff_hidden must be >= 1".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return fail(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        for (name, p) in [
            ("dropout_block", self.dropout_block),
            ("dropout_classifier", self.dropout_classifier),
        ] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} = {p} outside [0, 1)"));
            }
        }
        if self.modalities.is_empty() {
            return fail("at least one modality is required".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if self.modalities[..i].iter().any(|o| o.modality == m.modality) {
                return fail(format!("modality {} listed twice", m.modality));
            }
            if m.width == 0 || m.length == 0 {
                return fail(format!("modality {} needs width and length >= 1", m.modality));
            }
        }
        if self.modality(self.primary).is_none() {
            return fail(format!("primary modality {} is not among the modalities", self.primary));
        }
        if self.variant == Variant::Monomodal && self.modalities.len() != 1 {
            return fail(format!(
                "the monomodal variant takes exactly one modality, got {}",
                self.modalities.len()
            ));
        }
        if !self.two_class_boundary.is_finite() {
            return fail("two_class_boundary must be finite".into());
        }
        Ok(())
    }

    pub fn modality(&self, m: Modality) -> Option<&ModalityConfig> {
        self.modalities.iter().find(|c| c.modality == m)
    }

    pub fn modality_list(&self) -> Vec<Modality> {
        self.modalities.iter().map(|m| m.modality).collect()
    }

    /// Modalities in processing order: primary first, then the rest in
    /// configured order.
    pub fn processing_order(&self) -> Vec<Modality> {
        let mut order = vec![self.primary];
        order.extend(self.modality_list().into_iter().filter(|&m| m != self.primary));
        order
    }

    /// Default variant for a modality set: monomodal for one stream, joint otherwise.
    pub fn default_variant(count: usize) -> Variant {
        if count == 1 {
            Variant::Monomodal
        } else {
            Variant::Joint
        }
    }

    /// Canonical text form (JSON with fixed field order).
    pub fn canonical_text(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Human-readable list of fields that differ, `"field: self vs other"`.
    pub fn differences(&self, other: &EncoderConfig) -> Vec<String> {
        let a = serde_json::to_value(self).expect("config serialises");
        let b = serde_json::to_value(other).expect("config serialises");
        let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else {
            return vec![];
        };
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, v)| format!("{k}: {v} vs {}", b.get(k).cloned().unwrap_or_default()))
            .collect()
    }
}

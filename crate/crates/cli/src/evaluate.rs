//! Scoring an ensemble of checkpoints on one split of a bundle.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbje_core::metrics::{accuracy, f1_unweighted, f1_weighted, multilabel_accuracy, ConfusionCounts};
use tbje_core::model::load_model;
use tbje_core::training::{decide, ensemble_predict, Label, Predictions, EMOTIONS};
use tbje_core::{Task, TbjeModel};

use crate::bundle::Bundle;
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub accuracy: f64,
    pub f1_weighted: f64,
    pub f1_unweighted: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl BinaryScores {
    fn new(pred: &[bool], gold: &[bool]) -> Result<Self> {
        let c = ConfusionCounts::tally(pred, gold);
        Ok(Self {
            accuracy: accuracy(pred, gold)?,
            f1_weighted: f1_weighted(pred, gold),
            f1_unweighted: f1_unweighted(pred, gold, &true),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionScores {
    pub emotion: String,
    #[serde(flatten)]
    pub scores: BinaryScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub split: String,
    pub task: String,
    pub modalities: String,
    pub examples: usize,
    /// Exact-match accuracy for sentiment, mean per-emotion accuracy for
    /// emotions.
    pub accuracy: f64,
    /// Positive-class scores of `sentiment-2`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub binary: Option<BinaryScores>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub emotions: Vec<EmotionScores>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Checks that `model` was trained on data shaped like the bundle.
pub(crate) fn check_compatible(model: &TbjeModel, bundle: &Bundle, what: &str) -> Result<()> {
    let cfg = model.config();
    for mc in &cfg.modalities {
        match bundle.manifest.modality(mc.modality) {
            Some(e) if e.width == mc.width && e.length == mc.length => {}
            Some(e) => {
                return Err(config_err(format!(
                    "{what}: {} expects {}×{}, bundle has {}×{}",
                    mc.modality, mc.length, mc.width, e.length, e.width
                )))
            }
            None => return Err(config_err(format!("{what}: bundle has no {} features", mc.modality))),
        }
    }
    if model.vocab_hash() != bundle.manifest.vocab_hash() {
        return Err(config_err(format!(
            "{what}: vocabulary {} does not match the bundle's {}",
            model.vocab_hash().unwrap_or("(none)"),
            bundle.manifest.vocab_hash().unwrap_or("(none)")
        )));
    }
    Ok(())
}

pub fn score(models: &[TbjeModel], bundle: &Bundle, split: &str) -> Result<Report> {
    let first = models.first().ok_or_else(|| config_err("no checkpoints to evaluate"))?;
    let cfg = first.config();
    let data = bundle.read_split(split)?;
    let examples = data.examples(&cfg.modality_list())?;
    let probs = ensemble_predict(models, &examples)?;
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let pred = decide(&probs, cfg.task)?;
    let mut report = Report {
        split: split.to_string(),
        task: cfg.task.to_string(),
        modalities: cfg.modality_list().iter().map(|m| m.letter().to_string()).collect::<Vec<_>>().join("+"),
        examples: examples.len(),
        accuracy: 0.0,
        binary: None,
        emotions: Vec::new(),
    };
    match pred {
        Predictions::Classes(p) => {
            let gold = labels.iter().map(|l| l.class(cfg.task, cfg.two_class_boundary)).collect::<tbje_core::Result<Vec<_>>>()?;
            report.accuracy = accuracy(&p, &gold)?;
            if cfg.task == Task::Sentiment2 {
                let pb: Vec<bool> = p.iter().map(|&c| c == 1).collect();
                let gb: Vec<bool> = gold.iter().map(|&c| c == 1).collect();
                report.binary = Some(BinaryScores::new(&pb, &gb)?);
            }
        }
        Predictions::Flags(p) => {
            for (j, name) in EMOTIONS.iter().enumerate() {
                let pj: Vec<bool> = p.iter().map(|r| r[j]).collect();
                let gj: Vec<bool> = labels.iter().map(|l| l.emotions[j]).collect();
                let scores = BinaryScores::new(&pj, &gj)?;
                report.emotions.push(EmotionScores { emotion: name.to_string(), scores });
            }
            report.accuracy = multilabel_accuracy(&p, &labels.iter().map(|l| l.emotions).collect::<Vec<_>>())?;
        }
    }
    Ok(report)
}

/// Loads `checkpoints`, checks them against the bundle and scores the
/// averaged ensemble on `split`.
pub fn evaluate(bundle_dir: &Path, checkpoints: &[PathBuf], split: &str) -> Result<Report> {
    let bundle = Bundle::open(bundle_dir)?;
    if !bundle.has_split(split) {
        return Err(config_err(format!("bundle {} has no {split} split", bundle_dir.display())));
    }
    let models = checkpoints
        .iter()
        .map(|p| {
            let m = load_model(p)?;
            check_compatible(&m, &bundle, &p.display().to_string())?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    score(&models, &bundle, split)
}

/// Checkpoints `member*.tbjm` of a training output directory, by member.
pub fn run_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for i in 0.. {
        let p = crate::train::member_file(dir, i, "tbjm");
        if !p.is_file() {
            break;
        }
        found.push(p);
    }
    if found.is_empty() {
        return Err(config_err(format!("{} holds no member checkpoints", dir.display())));
    }
    Ok(found)
}

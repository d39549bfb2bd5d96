//! Accuracy against encoder depth.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use tbje_core::training::{decide, ensemble_predict, task_accuracy, Label};

use crate::bundle::Bundle;
use crate::config::RunConfig;
use crate::error::{config_err, Result};
use crate::train::train_member;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub blocks: usize,
    pub accuracy: f64,
    /// Most epochs any member ran.
    pub epochs: usize,
    pub seconds: f64,
}

/// For every depth in `blocks`, trains an ensemble of
/// `cfg.train.ensemble_size` members and scores it on the test split
/// (the valid split when there is no test split).
pub fn sweep_blocks(bundle_dir: &Path, cfg: &RunConfig, blocks: &[usize]) -> Result<Vec<SweepRow>> {
    if blocks.is_empty() {
        return Err(config_err("the block list is empty"));
    }
    let bundle = Bundle::open(bundle_dir)?;
    for split in ["train", "valid"] {
        if !bundle.has_split(split) {
            return Err(config_err(format!("bundle {} has no {split} split", bundle_dir.display())));
        }
    }
    let eval_split = if bundle.has_split("test") { "test" } else { "valid" };
    let modalities = cfg.model.encoder_config(&bundle.manifest)?.modality_list();
    let train = bundle.read_split("train")?.examples(&modalities)?;
    let valid = bundle.read_split("valid")?.examples(&modalities)?;
    let scored = bundle.read_split(eval_split)?.examples(&modalities)?;
    let labels: Vec<Label> = scored.iter().map(|e| e.label).collect();
    let hash = bundle.manifest.vocab_hash();

    blocks
        .iter()
        .map(|&b| {
            let mut model = cfg.model.clone();
            model.blocks = b;
            let encoder = model.encoder_config(&bundle.manifest)?;
            let start = Instant::now();
            let members = (0..cfg.train.ensemble_size)
                .into_par_iter()
                .map(|i| train_member(&encoder, &cfg.train, i, hash, &train, &valid, None, None, |_, _| Ok(())))
                .collect::<Result<Vec<_>>>()?;
            let seconds = start.elapsed().as_secs_f64();
            let epochs = members.iter().map(|m| m.1.epoch).max().unwrap_or(0);
            let models: Vec<_> = members.into_iter().map(|m| m.0).collect();
            let probs = ensemble_predict(&models, &scored)?;
            let accuracy = task_accuracy(&decide(&probs, encoder.task)?, &labels, encoder.task, encoder.two_class_boundary)?;
            Ok(SweepRow { blocks: b, accuracy, epochs, seconds })
        })
        .collect()
}

pub fn format_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("blocks\taccuracy\tepochs\tseconds\n");
    for r in rows {
        out.push_str(&format!("{}\t{:.6}\t{}\t{:.3}\n", r.blocks, r.accuracy, r.epochs, r.seconds));
    }
    out
}

//! Separable synthetic bundles for smoke tests and memorisation runs.

use std::collections::BTreeMap;
use std::path::Path;

use tbje_core::features::ModalityBatch;
use tbje_core::model::ModalityConfig;
use tbje_core::synthetic::{generate, SyntheticSpec};
use tbje_core::Modality;

use crate::bundle::{write_bundle, Manifest, ModalityEntry, SplitData, SPLITS};
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub modalities: Vec<Modality>,
    pub examples: usize,
    pub length: usize,
    pub width: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            modalities: vec![Modality::Linguistic, Modality::Acoustic, Modality::Visual],
            examples: 32,
            length: 4,
            width: 8,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Writes a bundle whose train, valid and test splits all hold the same
/// generated examples.
pub fn synth_bundle(out: &Path, opts: &SynthOptions) -> Result<Manifest> {
    if opts.examples == 0 || opts.length == 0 || opts.width == 0 || opts.modalities.is_empty() {
        return Err(config_err("synthetic bundles need examples, length, width and modalities >= 1"));
    }
    let configs: Vec<ModalityConfig> = opts
        .modalities
        .iter()
        .map(|&m| ModalityConfig { modality: m, width: opts.width, length: opts.length, positional_encoding: false })
        .collect();
    let spec = SyntheticSpec { examples: opts.examples, noise: opts.noise, seed: opts.seed };
    let examples = generate(&configs, &spec)?;
    let batches = configs
        .iter()
        .enumerate()
        .map(|(j, mc)| {
            let rows = examples.iter().map(|e| (e.inputs[j].features.clone(), e.inputs[j].mask.clone())).collect();
            ModalityBatch::from_examples(mc.modality, rows)
        })
        .collect::<tbje_core::Result<Vec<_>>>()?;
    let split = SplitData {
        ids: (0..examples.len()).map(|i| format!("synthetic-{i:05}")).collect(),
        labels: examples.iter().map(|e| e.label).collect(),
        batches,
    };
    let splits: BTreeMap<String, SplitData> = SPLITS.iter().map(|s| (s.to_string(), split.clone())).collect();
    let manifest = Manifest::new(
        configs.iter().map(|c| ModalityEntry { modality: c.modality, width: c.width, length: c.length }).collect(),
    );
    write_bundle(out, manifest, None, &splits)
}

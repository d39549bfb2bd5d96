//! Ensemble training on a bundle.
//!
//! Output directory layout, member `i` seeded with `seed + i`:
//!
//! ```text
//! run.json            encoder and training config of the run
//! member{i}.tbjm      best-validation checkpoint
//! member{i}.state     resumable training state (TBJS), rewritten every epoch
//! member{i}.log.jsonl one JSON epoch record per line
//! summary.json        per-member and ensemble validation accuracy
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tbje_core::model::save_model;
use tbje_core::training::{
    decide, ensemble_predict, fit_with, task_accuracy, EpochRecord, Example, Flow, Label, TrainConfig, TrainState,
};
use tbje_core::{EncoderConfig, TbjeModel};

use crate::bundle::Bundle;
use crate::config::RunConfig;
use crate::error::{config_err, format_err, io_err, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOptions {
    /// Continue from the `member{i}.state` files in the output directory.
    pub resume: bool,
    /// Halt every member after this many epochs in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub vocab_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub member: usize,
    pub seed: u64,
    pub epochs: usize,
    pub finished: bool,
    pub best_valid_accuracy: Option<f64>,
    pub checkpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub task: String,
    pub modalities: String,
    pub members: Vec<MemberSummary>,
    /// Accuracy of the averaged ensemble on the validation split; absent
    /// until every member has finished.
    pub ensemble_valid_accuracy: Option<f64>,
}

pub fn member_file(out: &Path, member: usize, ext: &str) -> PathBuf {
    out.join(format!("member{member}.{ext}"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn write_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialise");
        buf.write_all(b"\n").expect("writing to a Vec");
    }
    write_atomic(path, &buf)
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| format_err(format!("{}: {e}", path.display()))))
        .collect()
}

/// Trains one member to completion (or to the `stop_after` limit).
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_member(
    encoder: &EncoderConfig,
    cfg: &TrainConfig,
    member: usize,
    vocab_hash: Option<&str>,
    train: &[Example],
    valid: &[Example],
    state: Option<TrainState>,
    stop_after: Option<usize>,
    mut on_epoch: impl FnMut(&EpochRecord, &TrainState) -> Result<()>,
) -> Result<(TbjeModel, TrainState, bool)> {
    let seed = cfg.member_seed(member);
    let mut model = TbjeModel::new(encoder.clone(), seed)?;
    model.set_vocab_hash(vocab_hash.map(str::to_string));
    let mut done = 0usize;
    let mut failure = None;
    let outcome = fit_with(&mut model, state, train, valid, cfg, seed, &mut |record, state| {
        if let Err(e) = on_epoch(record, state) {
            failure = Some(e);
            return Ok(Flow::Halt);
        }
        done += 1;
        Ok(if stop_after.is_some_and(|n| done >= n) { Flow::Halt } else { Flow::Continue })
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((model, outcome.state, outcome.finished))
}

/// Trains `cfg.train.ensemble_size` members in parallel on the bundle's
/// train split, selecting on its valid split.
pub fn train(bundle_dir: &Path, out: &Path, cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    let bundle = Bundle::open(bundle_dir)?;
    for split in ["train", "valid"] {
        if !bundle.has_split(split) {
            return Err(config_err(format!("bundle {} has no {split} split", bundle_dir.display())));
        }
    }
    let encoder = cfg.model.encoder_config(&bundle.manifest)?;
    let record = RunRecord { encoder: encoder.clone(), train: cfg.train.clone(), vocab_hash: bundle.manifest.vocab_hash().map(str::to_string) };
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let run_path = out.join("run.json");
    if opts.resume && run_path.is_file() {
        let text = fs::read_to_string(&run_path).map_err(|e| io_err(&run_path, e))?;
        let previous: RunRecord =
            serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {e}", run_path.display())))?;
        if previous != record {
            return Err(config_err(format!(
                "cannot resume {}: the run was started with a different config or bundle",
                out.display()
            )));
        }
    }
    let mut text = serde_json::to_string_pretty(&record).expect("run record serialises");
    text.push('\n');
    write_atomic(&run_path, text.as_bytes())?;

    let modalities = encoder.modality_list();
    let train_set = bundle.read_split("train")?.examples(&modalities)?;
    let valid_set = bundle.read_split("valid")?.examples(&modalities)?;
    let vocab_hash = record.vocab_hash.as_deref();

    let results = (0..cfg.train.ensemble_size)
        .into_par_iter()
        .map(|i| {
            let state_path = member_file(out, i, "state");
            let log_path = member_file(out, i, "log.jsonl");
            let state = if opts.resume && state_path.is_file() { Some(TrainState::load(&state_path)?) } else { None };
            let (model, state, finished) = train_member(
                &encoder,
                &cfg.train,
                i,
                vocab_hash,
                &train_set,
                &valid_set,
                state,
                opts.stop_after,
                |_, st| {
                    st.save(&state_path)?;
                    write_log(&log_path, &st.records)
                },
            )?;
            state.save(&state_path)?;
            write_log(&log_path, &state.records)?;
            let checkpoint = member_file(out, i, "tbjm");
            if finished {
                save_model(&model, &checkpoint)?;
            }
            Ok((model, state, finished))
        })
        .collect::<Result<Vec<_>>>()?;

    let members = results
        .iter()
        .enumerate()
        .map(|(i, (_, state, finished))| MemberSummary {
            member: i,
            seed: cfg.train.member_seed(i),
            epochs: state.epoch,
            finished: *finished,
            best_valid_accuracy: state.schedule.best,
            checkpoint: format!("member{i}.tbjm"),
        })
        .collect();
    let ensemble_valid_accuracy = if results.iter().all(|r| r.2) {
        let models: Vec<TbjeModel> = results.into_iter().map(|r| r.0).collect();
        let probs = ensemble_predict(&models, &valid_set)?;
        let labels: Vec<Label> = valid_set.iter().map(|e| e.label).collect();
        Some(task_accuracy(&decide(&probs, encoder.task)?, &labels, encoder.task, encoder.two_class_boundary)?)
    } else {
        None
    };
    let summary = TrainSummary {
        task: encoder.task.to_string(),
        modalities: modalities.iter().map(|m| m.letter().to_string()).collect::<Vec<_>>().join("+"),
        members,
        ensemble_valid_accuracy,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    text.push('\n');
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}

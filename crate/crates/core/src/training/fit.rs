use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::checkpoint::{read_header, read_named, write_header, write_named};
use crate::model::{ModalityInput, ParamStore, TbjeModel};
use crate::rng::{batch_index, stream, StreamKind};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::training::adam::Adam;
use crate::training::predict::{decide, probabilities, task_accuracy};
use crate::training::schedule::{Schedule, Transition};
use crate::training::{loss, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub decay_factor: f64,
    pub max_decays: usize,
    pub patience: usize,
    pub ensemble_size: usize,
    /// Member `i` of the ensemble uses seed `seed + i`.
    pub seed: u64,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 32,
            decay_factor: 0.2,
            max_decays: 2,
            patience: 3,
            ensemble_size: 5,
            seed: 0,
            max_epochs: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be finite and >= 0", self.lr));
        }
        if self.batch_size == 0 || self.ensemble_size == 0 || self.max_epochs == 0 {
            return fail("batch_size, ensemble_size and max_epochs must be >= 1".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail(format!("decay_factor {} outside (0, 1]", self.decay_factor));
        }
        if self.patience == 0 {
            return fail("patience must be >= 1".into());
        }
        Ok(())
    }

    pub fn member_seed(&self, member: usize) -> u64 {
        self.seed.wrapping_add(member as u64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub inputs: Vec<ModalityInput>,
    pub label: Label,
}

impl AsRef<[ModalityInput]> for Example {
    fn as_ref(&self) -> &[ModalityInput] {
        &self.inputs
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub valid_accuracy: f64,
    pub decays_used: usize,
    pub transition: Transition,
}

/// Everything needed to resume a run: current and best parameters, Adam
/// moments, the schedule and the epoch log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub seed: u64,
    pub epoch: usize,
    pub schedule: Schedule,
    pub adam: Adam,
    pub params: ParamStore,
    pub best_params: ParamStore,
    pub records: Vec<EpochRecord>,
}

pub const STATE_MAGIC: &[u8; 4] = b"TBJS";
pub const STATE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateHeader {
    seed: u64,
    epoch: usize,
    step: u64,
    schedule: Schedule,
    records: Vec<EpochRecord>,
}

const GROUPS: [&str; 4] = ["param", "best", "adam.m", "adam.v"];

impl TrainState {
    pub fn new(model: &TbjeModel, cfg: &TrainConfig, seed: u64) -> Self {
        Self {
            seed,
            epoch: 0,
            schedule: Schedule::new(cfg.lr, cfg.decay_factor, cfg.max_decays, cfg.patience),
            adam: Adam::new(),
            params: model.params().clone(),
            best_params: model.params().clone(),
            records: Vec::new(),
        }
    }

    pub fn finished(&self, cfg: &TrainConfig) -> bool {
        self.schedule.stopped || self.epoch >= cfg.max_epochs
    }

    /// `TBJS` layout: magic, `u32` version, `u32` header length, JSON header
    /// (seed, epoch, Adam step, schedule, epoch log), then named tensors in
    /// the checkpoint encoding, prefixed `param:`, `best:`, `adam.m:` and
    /// `adam.v:`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&StateHeader {
            seed: self.seed,
            epoch: self.epoch,
            step: self.adam.step,
            schedule: self.schedule.clone(),
            records: self.records.clone(),
        })
        .expect("state header serialises");
        let mut out = Vec::new();
        write_header(&mut out, STATE_MAGIC, STATE_FORMAT_VERSION, &header);
        let mut named: Vec<(String, &Tensor)> = Vec::new();
        let maps: [Box<dyn Iterator<Item = (&String, &Tensor)>>; 4] = [
            Box::new(self.params.iter()),
            Box::new(self.best_params.iter()),
            Box::new(self.adam.first.iter()),
            Box::new(self.adam.second.iter()),
        ];
        for (group, map) in GROUPS.iter().zip(maps) {
            named.extend(map.map(|(n, t)| (format!("{group}:{n}"), t)));
        }
        let refs: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        write_named(&mut out, &refs);
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let header = read_header(&mut bytes, STATE_MAGIC, STATE_FORMAT_VERSION)?;
        let header: StateHeader =
            serde_json::from_slice(header).map_err(|e| Error::Format(format!("train state header: {e}")))?;
        let mut params = ParamStore::new();
        let mut best = ParamStore::new();
        let mut adam = Adam { step: header.step, ..Adam::default() };
        for (name, t) in read_named(&mut bytes)? {
            let (group, rest) = name
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("unexpected tensor {name} in train state")))?;
            match group {
                "param" => params.insert(rest, t),
                "best" => best.insert(rest, t),
                "adam.m" => {
                    adam.first.insert(rest.to_string(), t);
                }
                "adam.v" => {
                    adam.second.insert(rest.to_string(), t);
                }
                _ => return Err(Error::Format(format!("unexpected tensor {name} in train state"))),
            }
        }
        if !bytes.is_empty() {
            return Err(Error::Format("trailing bytes after train state".into()));
        }
        Ok(Self {
            seed: header.seed,
            epoch: header.epoch,
            schedule: header.schedule,
            adam,
            params,
            best_params: best,
            records: header.records,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Returned by the per-epoch observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// Stop after this epoch without marking the run finished.
    Halt,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub state: TrainState,
    /// The schedule stopped the run or the epoch guard was reached; the
    /// model then holds the best-validation parameters.
    pub finished: bool,
}

/// Validation accuracy of `model` on `examples` for its configured task.
pub fn evaluate_accuracy(model: &TbjeModel, examples: &[Example]) -> Result<f64> {
    let cfg = model.config();
    let probs = probabilities(model, examples)?;
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    task_accuracy(&decide(&probs, cfg.task)?, &labels, cfg.task, cfg.two_class_boundary)
}

/// One optimisation step on `batch`; returns the batch loss.
fn train_batch(model: &mut TbjeModel, adam: &mut Adam, batch: &[&Example], lr: f64, tape: &mut Tape) -> Result<f64> {
    let bound = model.bind(tape, true)?;
    let rows = batch
        .iter()
        .map(|ex| bound.logits(tape, &ex.inputs))
        .collect::<Result<Vec<_>>>()?;
    let logits = tape.concat_first(&rows)?;
    let labels: Vec<Label> = batch.iter().map(|e| e.label).collect();
    let cfg = model.config();
    let l = loss(tape, logits, &labels, cfg.task, cfg.two_class_boundary)?;
    let value = tape.value(l).data()[0];
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    tape.backward(l)?;
    let grads: BTreeMap<String, Tensor> = bound
        .vars
        .iter()
        .filter_map(|(name, &v)| tape.grad(v).map(|g| (name.clone(), g.clone())))
        .collect();
    adam.step(model.params_mut(), &grads, lr)?;
    Ok(value)
}

/// Trains `model` from scratch with seed `seed`.
pub fn fit(model: &mut TbjeModel, train: &[Example], valid: &[Example], cfg: &TrainConfig, seed: u64) -> Result<FitOutcome> {
    fit_with(model, None, train, valid, cfg, seed, &mut |_, _| Ok(Flow::Continue))
}

/// Trains `model`, resuming from `state` when given. `observer` runs after
/// every epoch with the new log record and the state at that point.
///
/// Epoch `e` shuffles with stream `(seed, Shuffle, e)` and batch `b` of it
/// draws dropout masks from `(seed, Dropout, batch_index(e, b))`, so a
/// resumed run follows the same trajectory as an uninterrupted one.
pub fn fit_with(
    model: &mut TbjeModel,
    state: Option<TrainState>,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochRecord, &TrainState) -> Result<Flow>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Contract("training and validation splits must be non-empty".into()));
    }
    let mut state = match state {
        Some(s) => {
            if s.seed != seed {
                return Err(Error::Config(format!("train state was seeded with {}, not {seed}", s.seed)));
            }
            model.set_params(s.params.clone())?;
            s
        }
        None => TrainState::new(model, cfg, seed),
    };
    while !state.finished(cfg) {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(seed, StreamKind::Shuffle, epoch as u64));
        let lr = state.schedule.lr;
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::training(stream(seed, StreamKind::Dropout, batch_index(epoch, b)));
            let value = train_batch(model, &mut state.adam, &batch, lr, &mut tape).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!(
                    "diverged at epoch {} batch {b}: {msg} (lr {lr:e}, decays used {}, best validation accuracy {:?})",
                    epoch + 1,
                    state.schedule.decays_used,
                    state.schedule.best
                )),
                other => other,
            })?;
            total += value * batch.len() as f64;
        }
        let valid_accuracy = evaluate_accuracy(model, valid)?;
        let transition = state.schedule.observe(valid_accuracy);
        if transition == Transition::Improved {
            state.best_params = model.params().clone();
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: total / train.len() as f64,
            valid_accuracy,
            decays_used: state.schedule.decays_used,
            transition,
        };
        state.records.push(record.clone());
        state.epoch += 1;
        state.params = model.params().clone();
        if observer(&record, &state)? == Flow::Halt && !state.finished(cfg) {
            return Ok(FitOutcome { state, finished: false });
        }
    }
    model.set_params(state.best_params.clone())?;
    Ok(FitOutcome { state, finished: true })
}

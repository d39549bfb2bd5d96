//! Finite-difference verification of the analytic gradients.
//!
//! For every parameter tensor the analytic gradient `a` is compared with
//! the central difference `n` and scored as
//! `max|a − n| / max(max|a|, max|n|, DENOMINATOR_FLOOR)`.
//! The floor keeps tensors whose true gradient is zero (key biases, for
//! instance, cancel inside the softmax) from turning rounding noise into a
//! failure.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, Modality, ModalityConfig, ModalityInput, Task, TbjeModel};
use crate::rng::{stream, StreamKind};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::training::{loss, Example, Label};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let scale = analytic
        .data()
        .iter()
        .chain(numeric.data())
        .fold(DENOMINATOR_FLOOR, |m, v| m.max(v.abs()));
    analytic.max_abs_diff(numeric) / scale
}

/// Central differences of a scalar function at `x`, one coordinate at a time.
pub fn central_difference(mut f: impl FnMut(&Tensor) -> Result<f64>, x: &Tensor, h: f64) -> Result<Tensor> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Eval-mode batch loss of `model` on `examples`.
pub fn model_loss(model: &TbjeModel, examples: &[Example]) -> Result<f64> {
    let mut tape = Tape::new();
    let (l, _) = record_loss(model, examples, &mut tape, false)?;
    Ok(tape.value(l).data()[0])
}

fn record_loss(
    model: &TbjeModel,
    examples: &[Example],
    tape: &mut Tape,
    requires_grad: bool,
) -> Result<(crate::tape::Var, BTreeMap<String, crate::tape::Var>)> {
    let bound = model.bind(tape, requires_grad)?;
    let rows = examples
        .iter()
        .map(|ex| bound.logits(tape, &ex.inputs))
        .collect::<Result<Vec<_>>>()?;
    let logits = tape.concat_first(&rows)?;
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let cfg = model.config();
    let l = loss(tape, logits, &labels, cfg.task, cfg.two_class_boundary)?;
    Ok((l, bound.vars))
}

/// Backpropagated gradient of every parameter (zero where unused).
pub fn analytic_gradients(model: &TbjeModel, examples: &[Example]) -> Result<BTreeMap<String, Tensor>> {
    let mut tape = Tape::new();
    let (l, vars) = record_loss(model, examples, &mut tape, true)?;
    tape.backward(l)?;
    Ok(vars
        .into_iter()
        .map(|(name, v)| {
            let g = tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(v).to_vec()));
            (name, g)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub values: usize,
    pub max_abs_error: f64,
    pub relative_error: f64,
}

impl ParamCheck {
    pub fn passed(&self) -> bool {
        self.relative_error < TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub params: Vec<ParamCheck>,
}

impl GradReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params.iter().map(|p| p.relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(ParamCheck::passed)
    }
}

/// Hook that may alter an analytic gradient before comparison; used to
/// confirm that the check catches a broken backward pass.
pub type Corruption<'a> = &'a dyn Fn(&str, &mut Tensor);

/// Compares analytic and finite-difference gradients of every parameter.
pub fn check_model(model: &TbjeModel, examples: &[Example], corrupt: Option<Corruption<'_>>) -> Result<GradReport> {
    let mut grads = analytic_gradients(model, examples)?;
    if let Some(c) = corrupt {
        for (name, g) in grads.iter_mut() {
            c(name, g);
        }
    }
    let mut probe = model.clone();
    let mut params = Vec::new();
    for (name, analytic) in &grads {
        let x = model.params().get(name).expect("gradient names come from the model").clone();
        let numeric = central_difference(
            |v| {
                *probe.params_mut().get_mut(name).expect("known parameter") = v.clone();
                model_loss(&probe, examples)
            },
            &x,
            STEP,
        )?;
        *probe.params_mut().get_mut(name).expect("known parameter") = x;
        if !numeric.is_finite() {
            return Err(Error::Numeric(format!("finite differences of {name} are not finite")));
        }
        params.push(ParamCheck {
            name: name.clone(),
            values: analytic.len(),
            max_abs_error: analytic.max_abs_diff(&numeric),
            relative_error: relative_error(analytic, &numeric),
        });
    }
    Ok(GradReport { params })
}

/// Small configuration for gradient checks: two blocks of width 16 with two
/// heads, sequences of length 4.
pub fn toy_config(modalities: &[Modality]) -> EncoderConfig {
    let widths = |m: Modality| match m {
        Modality::Linguistic => 6,
        Modality::Acoustic => 5,
        Modality::Visual => 7,
    };
    EncoderConfig {
        blocks: 2,
        hidden: 16,
        heads: 2,
        ff_hidden: 32,
        modalities: modalities
            .iter()
            .map(|&m| ModalityConfig {
                modality: m,
                width: widths(m),
                length: 4,
                positional_encoding: m == Modality::Linguistic,
            })
            .collect(),
        primary: modalities.first().copied().unwrap_or(Modality::Linguistic),
        variant: EncoderConfig::default_variant(modalities.len()),
        task: Task::Sentiment7,
        ..Default::default()
    }
}

/// Random examples matching `cfg`. Odd-numbered examples have their last
/// row masked out and zeroed in every modality.
pub fn toy_examples(cfg: &EncoderConfig, count: usize, seed: u64) -> Result<Vec<Example>> {
    let mut rng = stream(seed, StreamKind::Synthetic, 0);
    (0..count)
        .map(|i| {
            let inputs = cfg
                .modalities
                .iter()
                .map(|mc| {
                    let mut mask = vec![true; mc.length];
                    if i % 2 == 1 && mc.length > 1 {
                        mask[mc.length - 1] = false;
                    }
                    let data = (0..mc.length * mc.width)
                        .map(|j| if mask[j / mc.width] { rng.random_range(-1.0..1.0) } else { 0.0 })
                        .collect();
                    ModalityInput::new(mc.modality, Tensor::matrix(mc.length, mc.width, data)?, mask)
                })
                .collect::<Result<Vec<_>>>()?;
            let emotions = std::array::from_fn(|_| rng.random_bool(0.5));
            let label = Label::new(rng.random_range(-3.0..=3.0), emotions)?;
            Ok(Example { inputs, label })
        })
        .collect()
}

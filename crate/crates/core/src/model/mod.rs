//! The joint-encoding classifier: per-modality input projections, stacks of
//! Transformer blocks, glimpse layers and the summed classification head.
//!
//! Parameters live in a [`ParamStore`] under hierarchical names such as
//! `acoustic.block0.coattn.query.weight`. A forward pass binds them onto a
//! [`Tape`] as leaves ([`TbjeModel::bind`]) and runs on the resulting
//! [`BoundModel`].

pub(crate) mod checkpoint;
mod config;
mod encoder;
mod glimpse;

use std::collections::BTreeMap;

use rand::Rng as _;

pub use checkpoint::{load_model, load_model_expecting, save_model, MODEL_MAGIC, MODEL_FORMAT_VERSION};
pub use config::{
    DropoutPlacement, EncoderConfig, Modality, ModalityConfig, Task, Variant, ACOUSTIC_LENGTH,
    ACOUSTIC_WIDTH, LINGUISTIC_LENGTH, LINGUISTIC_WIDTH, VISUAL_LENGTH,
};
pub use encoder::{BoundBlock, BoundModel, BoundStack, ModalityInput};
pub use glimpse::{glimpse, glimpse_weights, GlimpseParams};

use crate::error::{Error, Result};
use crate::nn::{LayerNormParams, Linear, MhaParams, MlpParams};
use crate::rng::{self, StreamKind};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn value_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// True when every tensor matches `other` bit for bit.
    pub fn bit_identical(&self, other: &ParamStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

pub(crate) fn block_prefix(m: Modality, block: usize) -> String {
    format!("{}.block{block}", m.name())
}

/// Name of the attention sublayer: self-attention for the primary (and for
/// the monomodal variant), co-attention for modulated modalities.
pub(crate) fn attention_kind(cfg: &EncoderConfig, m: Modality) -> &'static str {
    if cfg.variant == Variant::Joint && m != cfg.primary {
        "coattn"
    } else {
        "attn"
    }
}

/// Every parameter of the model described by `cfg`, with shape and init.
pub(crate) fn layout(cfg: &EncoderConfig) -> Vec<ParamSpec> {
    let k = cfg.hidden;
    let mut specs = Vec::new();
    let linear = |specs: &mut Vec<ParamSpec>, prefix: String, i: usize, o: usize| {
        specs.push(ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![i, o],
            init: Init::Xavier { fan_in: i, fan_out: o },
        });
        specs.push(ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![o],
            init: Init::Zeros,
        });
    };
    let norm = |specs: &mut Vec<ParamSpec>, prefix: String, n: usize| {
        specs.push(ParamSpec { name: format!("{prefix}.gain"), shape: vec![n], init: Init::Ones });
        specs.push(ParamSpec { name: format!("{prefix}.bias"), shape: vec![n], init: Init::Zeros });
    };
    for mc in &cfg.modalities {
        let m = mc.modality;
        linear(&mut specs, format!("{}.input", m.name()), mc.width, k);
        for b in 0..cfg.blocks {
            let p = block_prefix(m, b);
            let kind = attention_kind(cfg, m);
            for proj in ["query", "key", "context", "output"] {
                linear(&mut specs, format!("{p}.{kind}.{proj}"), k, k);
            }
            norm(&mut specs, format!("{p}.{kind}_norm"), k);
            linear(&mut specs, format!("{p}.mlp.hidden"), k, cfg.ff_hidden);
            linear(&mut specs, format!("{p}.mlp.output"), cfg.ff_hidden, k);
            norm(&mut specs, format!("{p}.mlp_norm"), k);
            if cfg.variant == Variant::Joint {
                linear(&mut specs, format!("{p}.glimpse.embed"), k, 2 * k);
                specs.push(ParamSpec {
                    name: format!("{p}.glimpse.scores"),
                    shape: vec![2 * k, mc.length],
                    init: Init::Xavier { fan_in: 2 * k, fan_out: 1 },
                });
                norm(&mut specs, format!("{p}.glimpse_norm"), k);
            }
        }
        let p = format!("{}.final_glimpse", m.name());
        linear(&mut specs, format!("{p}.embed"), k, 2 * k);
        specs.push(ParamSpec {
            name: format!("{p}.scores"),
            shape: vec![2 * k, 1],
            init: Init::Xavier { fan_in: 2 * k, fan_out: 1 },
        });
    }
    norm(&mut specs, "classifier.norm".into(), k);
    linear(&mut specs, "classifier.output".into(), k, cfg.task.outputs());
    specs
}

/// All learnable state of one encoder-classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct TbjeModel {
    config: EncoderConfig,
    params: ParamStore,
    vocab_hash: Option<String>,
}

impl TbjeModel {
    /// Fresh model with Xavier-uniform weights, zero biases and unit
    /// layer-norm gains, drawn from the initialisation stream of `seed`.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, StreamKind::Init, 0);
        let mut params = ParamStore::new();
        for spec in layout(&config) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Xavier { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
                }
            };
            params.insert(spec.name, Tensor::new(spec.shape, data)?);
        }
        Ok(Self { config, params, vocab_hash: None })
    }

    /// Wraps existing parameters after checking them against the layout.
    pub fn from_parts(config: EncoderConfig, params: ParamStore, vocab_hash: Option<String>) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        if specs.len() != params.len() {
            return Err(Error::Config(format!(
                "parameter count {} does not match the configured layout ({})",
                params.len(),
                specs.len()
            )));
        }
        for spec in &specs {
            match params.get(&spec.name) {
                None => return Err(Error::Config(format!("missing parameter {}", spec.name))),
                Some(t) if t.shape() != spec.shape.as_slice() => {
                    return Err(Error::Config(format!(
                        "parameter {} has shape {:?}, layout expects {:?}",
                        spec.name,
                        t.shape(),
                        spec.shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Self { config, params, vocab_hash })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        let checked = Self::from_parts(self.config.clone(), params, None)?;
        self.params = checked.params;
        Ok(())
    }

    pub fn vocab_hash(&self) -> Option<&str> {
        self.vocab_hash.as_deref()
    }

    pub fn set_vocab_hash(&mut self, hash: Option<String>) {
        self.vocab_hash = hash;
    }

    /// Records every parameter on `tape` and returns typed handles.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<BoundModel> {
        let mut vars = BTreeMap::new();
        for (name, t) in self.params.iter() {
            vars.insert(name.clone(), tape.leaf(t.clone(), requires_grad));
        }
        let get = |name: String| -> Result<Var> {
            vars.get(&name)
                .copied()
                .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
        };
        let linear = |prefix: &str| -> Result<Linear> {
            Ok(Linear { weight: get(format!("{prefix}.weight"))?, bias: get(format!("{prefix}.bias"))? })
        };
        let norm = |prefix: &str| -> Result<LayerNormParams> {
            Ok(LayerNormParams { gain: get(format!("{prefix}.gain"))?, bias: get(format!("{prefix}.bias"))? })
        };
        let cfg = &self.config;
        let mut stacks = Vec::new();
        for mc in &cfg.modalities {
            let m = mc.modality;
            let kind = attention_kind(cfg, m);
            let mut blocks = Vec::new();
            for b in 0..cfg.blocks {
                let p = block_prefix(m, b);
                let attention = MhaParams {
                    query: linear(&format!("{p}.{kind}.query"))?,
                    key: linear(&format!("{p}.{kind}.key"))?,
                    context: linear(&format!("{p}.{kind}.context"))?,
                    output: linear(&format!("{p}.{kind}.output"))?,
                    heads: cfg.heads,
                    width: cfg.hidden,
                };
                let glimpse = if cfg.variant == Variant::Joint {
                    Some((
                        GlimpseParams {
                            embed: linear(&format!("{p}.glimpse.embed"))?,
                            scores: get(format!("{p}.glimpse.scores"))?,
                        },
                        norm(&format!("{p}.glimpse_norm"))?,
                    ))
                } else {
                    None
                };
                blocks.push(BoundBlock {
                    attention,
                    attention_norm: norm(&format!("{p}.{kind}_norm"))?,
                    mlp: MlpParams {
                        hidden: linear(&format!("{p}.mlp.hidden"))?,
                        output: linear(&format!("{p}.mlp.output"))?,
                    },
                    mlp_norm: norm(&format!("{p}.mlp_norm"))?,
                    glimpse,
                });
            }
            let positional = if mc.positional_encoding {
                Some(tape.constant(crate::nn::positional_encoding(mc.length, cfg.hidden)?))
            } else {
                None
            };
            let fg = format!("{}.final_glimpse", m.name());
            stacks.push(BoundStack {
                modality: m,
                input: linear(&format!("{}.input", m.name()))?,
                positional,
                blocks,
                final_glimpse: GlimpseParams {
                    embed: linear(&format!("{fg}.embed"))?,
                    scores: get(format!("{fg}.scores"))?,
                },
            });
        }
        Ok(BoundModel {
            config: cfg.clone(),
            stacks,
            classifier_norm: norm("classifier.norm")?,
            classifier: linear("classifier.output")?,
            vars,
        })
    }

    /// Evaluation-mode logits for one example, shape 1×outputs.
    pub fn logits(&self, inputs: &[ModalityInput]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let out = bound.logits(&mut tape, inputs)?;
        Ok(tape.value(out).clone())
    }

    /// Evaluation-mode logits for many examples, shape batch×outputs.
    pub fn logits_batch(&self, examples: &[Vec<ModalityInput>]) -> Result<Tensor> {
        let rows = examples
            .iter()
            .map(|ex| self.logits(ex).map(|t| t.into_data()))
            .collect::<Result<Vec<_>>>()?;
        Tensor::from_rows(&rows)
    }
}

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::config::{DropoutPlacement, EncoderConfig, Modality, Variant};
use crate::model::glimpse::{glimpse, GlimpseParams};
use crate::nn::{sublayer, LayerNormParams, Linear, MhaParams, MlpParams};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One example of one modality: padded features (N×width) and a validity
/// mask over the N rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityInput {
    pub modality: Modality,
    pub features: Tensor,
    pub mask: Vec<bool>,
}

impl ModalityInput {
    pub fn new(modality: Modality, features: Tensor, mask: Vec<bool>) -> Result<Self> {
        if features.rank() != 2 || features.shape()[0] != mask.len() {
            return Err(Error::shape("modality input", features.shape(), &[mask.len()]));
        }
        if !mask.iter().any(|&v| v) {
            return Err(Error::Contract(format!("{modality} input has no valid rows")));
        }
        Ok(Self { modality, features, mask })
    }

    /// All rows valid.
    pub fn dense(modality: Modality, features: Tensor) -> Result<Self> {
        let n = features.shape()[0];
        Self::new(modality, features, vec![true; n])
    }
}

#[derive(Clone, Debug)]
pub struct BoundBlock {
    pub attention: MhaParams,
    pub attention_norm: LayerNormParams,
    pub mlp: MlpParams,
    pub mlp_norm: LayerNormParams,
    /// In-block glimpse and its residual norm (joint variant only).
    pub glimpse: Option<(GlimpseParams, LayerNormParams)>,
}

#[derive(Clone, Debug)]
pub struct BoundStack {
    pub modality: Modality,
    pub input: Linear,
    pub positional: Option<Var>,
    pub blocks: Vec<BoundBlock>,
    pub final_glimpse: GlimpseParams,
}

/// A model whose parameters are recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub config: EncoderConfig,
    pub stacks: Vec<BoundStack>,
    pub classifier_norm: LayerNormParams,
    pub classifier: Linear,
    /// Parameter name → leaf handle.
    pub vars: BTreeMap<String, Var>,
}

fn find_input(inputs: &[ModalityInput], m: Modality) -> Result<&ModalityInput> {
    inputs
        .iter()
        .find(|i| i.modality == m)
        .ok_or_else(|| Error::Config(format!("input for modality {m} is missing")))
}

impl BoundModel {
    pub fn stack(&self, m: Modality) -> Result<&BoundStack> {
        self.stacks
            .iter()
            .find(|s| s.modality == m)
            .ok_or_else(|| Error::Config(format!("model has no {m} stack")))
    }

    fn dropout_rates(&self) -> (f64, f64) {
        let p = self.config.dropout_block;
        match self.config.dropout_placement {
            DropoutPlacement::PerSublayer => (p, p),
            DropoutPlacement::AttentionOnly => (p, 0.0),
        }
    }

    /// Input projection to the hidden width, plus position codes when enabled.
    pub fn embed(&self, tape: &mut Tape, input: &ModalityInput) -> Result<Var> {
        let mc = self
            .config
            .modality(input.modality)
            .ok_or_else(|| Error::Config(format!("model has no {} stack", input.modality)))?;
        let shape = input.features.shape();
        if shape.len() != 2 || shape[1] != mc.width || shape[0] != mc.length {
            return Err(Error::shape(
                "modality features vs config (length, width)",
                shape,
                &[mc.length, mc.width],
            ));
        }
        let stack = self.stack(input.modality)?;
        let x = tape.constant(input.features.clone());
        let h = stack.input.forward(tape, x)?;
        match stack.positional {
            Some(pe) => tape.add(h, pe),
            None => Ok(h),
        }
    }

    /// One block. `context` is the primary modality's representation and
    /// mask when this stack is modulated (co-attention); `None` means
    /// self-attention.
    pub fn block(
        &self,
        tape: &mut Tape,
        block: &BoundBlock,
        h: Var,
        mask: &[bool],
        context: Option<(Var, &[bool])>,
        with_glimpse: bool,
    ) -> Result<Var> {
        let (p_attn, p_rest) = self.dropout_rates();
        let mha = block.attention;
        let h = sublayer(
            tape,
            h,
            |t, y| match context {
                None => mha.forward(t, y, y, y, Some(mask)),
                Some((x, xmask)) => mha.forward(t, y, x, x, Some(xmask)),
            },
            &block.attention_norm,
            p_attn,
        )?;
        let mlp = block.mlp;
        let h = sublayer(tape, h, |t, y| mlp.forward(t, y), &block.mlp_norm, p_rest)?;
        match (&block.glimpse, with_glimpse) {
            (Some((gp, norm)), true) => {
                let gp = *gp;
                sublayer(tape, h, |t, m| glimpse(t, m, &gp, Some(mask)), norm, p_rest)
            }
            (None, true) => Err(Error::Config("block has no glimpse layer".into())),
            (_, false) => Ok(h),
        }
    }

    /// Stack of attention + MLP blocks over a single modality (no in-block
    /// glimpse), N×k.
    pub fn encode_monomodal(&self, tape: &mut Tape, input: &ModalityInput) -> Result<Var> {
        let stack = self.stack(input.modality)?;
        let mut h = self.embed(tape, input)?;
        for block in &stack.blocks {
            h = self.block(tape, block, h, &input.mask, None, false)?;
        }
        Ok(h)
    }

    /// Joint encoding with per-block representations. Entry `0` of each
    /// list is the embedded input, entry `b + 1` the output of block `b`.
    ///
    /// All stacks advance together: at block `b` the primary modality runs
    /// self-attention while every other modality runs co-attention whose
    /// keys and context are the primary's representation entering block `b`.
    pub fn encode_joint_trace(&self, tape: &mut Tape, inputs: &[ModalityInput]) -> Result<BTreeMap<Modality, Vec<Var>>> {
        let primary = self.config.primary;
        let primary_input = find_input(inputs, primary)
            .map_err(|_| Error::Config(format!("primary modality {primary} is missing from the inputs")))?;
        let order = self.config.processing_order();
        let mut reps: BTreeMap<Modality, Vec<Var>> = BTreeMap::new();
        let mut masks: BTreeMap<Modality, &[bool]> = BTreeMap::new();
        for &m in &order {
            let input = if m == primary { primary_input } else { find_input(inputs, m)? };
            reps.insert(m, vec![self.embed(tape, input)?]);
            masks.insert(m, &input.mask);
        }
        let primary_mask = masks[&primary];
        for b in 0..self.config.blocks {
            let x_b = reps[&primary][b];
            for &m in &order {
                let block = &self.stack(m)?.blocks[b];
                let h = reps[&m][b];
                let context = (m != primary).then_some((x_b, primary_mask));
                let out = self.block(tape, block, h, masks[&m], context, true)?;
                reps.get_mut(&m).expect("inserted above").push(out);
            }
        }
        Ok(reps)
    }

    /// Final representation of every modality, in processing order.
    pub fn encode_joint(&self, tape: &mut Tape, inputs: &[ModalityInput]) -> Result<Vec<(Modality, Var)>> {
        let reps = self.encode_joint_trace(tape, inputs)?;
        Ok(self
            .config
            .processing_order()
            .into_iter()
            .map(|m| (m, *reps[&m].last().expect("at least the embedding")))
            .collect())
    }

    /// Dispatches on the configured variant.
    pub fn encode(&self, tape: &mut Tape, inputs: &[ModalityInput]) -> Result<Vec<(Modality, Var)>> {
        match self.config.variant {
            Variant::Joint => self.encode_joint(tape, inputs),
            Variant::Monomodal => {
                let m = self.config.primary;
                let input = find_input(inputs, m)?;
                Ok(vec![(m, self.encode_monomodal(tape, input)?)])
            }
        }
    }

    /// Size-1 glimpse per modality, element-wise sum, classifier dropout,
    /// layer norm and the output projection. Returns 1×outputs logits.
    pub fn classify(&self, tape: &mut Tape, encoded: &[(Modality, Var)], inputs: &[ModalityInput]) -> Result<Var> {
        let mut summed: Option<Var> = None;
        for &(m, h) in encoded {
            let stack = self.stack(m)?;
            let mask = &find_input(inputs, m)?.mask;
            let v = glimpse(tape, h, &stack.final_glimpse, Some(mask))?;
            summed = Some(match summed {
                None => v,
                Some(s) => tape.add(s, v)?,
            });
        }
        let s = summed.ok_or_else(|| Error::Contract("classify needs at least one modality".into()))?;
        let s = tape.dropout(s, self.config.dropout_classifier)?;
        let n = self.classifier_norm.forward(tape, s)?;
        self.classifier.forward(tape, n)
    }

    pub fn logits(&self, tape: &mut Tape, inputs: &[ModalityInput]) -> Result<Var> {
        let encoded = self.encode(tape, inputs)?;
        self.classify(tape, &encoded, inputs)
    }
}

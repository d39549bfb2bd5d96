//! Straight-line reference implementations over plain nested vectors,
//! written directly from the layer definitions, without the tape or the `nn` helpers.
#![allow(dead_code)]

pub mod mel;
pub mod rational;
pub mod schedule;

use rand::Rng;
use tbje_core::model::{EncoderConfig, Modality, ModalityConfig, Variant};
use tbje_core::rng::{stream, StreamKind};
use tbje_core::{ModalityInput, Task, TbjeModel, Tensor};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(i, v)| v * b[i][j]).sum())
                .collect()
        })
        .collect()
}

pub fn affine(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    mat_mul(x, w)
        .into_iter()
        .map(|row| row.iter().zip(b).map(|(v, b)| v + b).collect())
        .collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

/// Masked softmax of a list of scores.
pub fn softmax(scores: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.max(1e-5).sqrt();
            row.iter().zip(gain).zip(bias).map(|((v, g), b)| g * (v - mean) / sd + b).collect()
        })
        .collect()
}

/// softmax(q·kᵀ / √d) c, one query row at a time.
pub fn attention(q: &Mat, k: &Mat, c: &Mat, mask: &[bool]) -> Mat {
    let d = q[0].len() as f64;
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
                .collect();
            let w = softmax(&scores, mask);
            (0..c[0].len()).map(|col| w.iter().zip(c).map(|(wj, cj)| wj * cj[col]).sum()).collect()
        })
        .collect()
}

pub struct Params<'a>(pub &'a TbjeModel);

impl Params<'_> {
    pub fn mat(&self, name: &str) -> Mat {
        to_mat(self.0.params().get(name).unwrap_or_else(|| panic!("missing {name}")))
    }

    pub fn vec(&self, name: &str) -> Vec<f64> {
        self.0.params().get(name).unwrap_or_else(|| panic!("missing {name}")).data().to_vec()
    }

    pub fn affine(&self, prefix: &str, x: &Mat) -> Mat {
        affine(x, &self.mat(&format!("{prefix}.weight")), &self.vec(&format!("{prefix}.bias")))
    }

    pub fn norm(&self, prefix: &str, x: &Mat) -> Mat {
        layer_norm(x, &self.vec(&format!("{prefix}.gain")), &self.vec(&format!("{prefix}.bias")))
    }
}

/// Multi-head attention with per-head column slices of the projections.
pub fn mha(p: &Params, prefix: &str, heads: usize, q: &Mat, k: &Mat, c: &Mat, mask: &[bool]) -> Mat {
    let qp = p.affine(&format!("{prefix}.query"), q);
    let kp = p.affine(&format!("{prefix}.key"), k);
    let cp = p.affine(&format!("{prefix}.context"), c);
    let width = qp[0].len();
    let d = width / heads;
    let cols = |m: &Mat, h: usize| -> Mat { m.iter().map(|r| r[h * d..(h + 1) * d].to_vec()).collect() };
    let mut joined: Mat = vec![Vec::with_capacity(width); q.len()];
    for h in 0..heads {
        for (row, part) in joined.iter_mut().zip(attention(&cols(&qp, h), &cols(&kp, h), &cols(&cp, h), mask)) {
            row.extend(part);
        }
    }
    p.affine(&format!("{prefix}.output"), &joined)
}

/// Stacked glimpses of `m`, one per column of the scores matrix.
pub fn glimpse(p: &Params, prefix: &str, m: &Mat, mask: &[bool]) -> Mat {
    let e = p.affine(&format!("{prefix}.embed"), m);
    let s = p.mat(&format!("{prefix}.scores"));
    (0..s[0].len())
        .map(|g| {
            let scores: Vec<f64> = e.iter().map(|row| row.iter().enumerate().map(|(i, v)| v * s[i][g]).sum()).collect();
            let w = softmax(&scores, mask);
            (0..m[0].len()).map(|col| w.iter().zip(m).map(|(wj, mj)| wj * mj[col]).sum()).collect()
        })
        .collect()
}

pub fn mlp(p: &Params, prefix: &str, x: &Mat) -> Mat {
    let h: Mat = p
        .affine(&format!("{prefix}.hidden"), x)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    p.affine(&format!("{prefix}.output"), &h)
}

/// One block of modality `m`; `context` = (primary representation, mask)
/// for co-attention.
pub fn block(p: &Params, cfg: &EncoderConfig, m: Modality, b: usize, h: &Mat, mask: &[bool], context: Option<(&Mat, &[bool])>, with_glimpse: bool) -> Mat {
    let pre = format!("{}.block{b}", m.name());
    let kind = if context.is_some() { "coattn" } else { "attn" };
    let a = match context {
        None => mha(p, &format!("{pre}.{kind}"), cfg.heads, h, h, h, mask),
        Some((x, xm)) => mha(p, &format!("{pre}.{kind}"), cfg.heads, h, x, x, xm),
    };
    let h = p.norm(&format!("{pre}.{kind}_norm"), &add(h, &a));
    let f = mlp(p, &format!("{pre}.mlp"), &h);
    let h = p.norm(&format!("{pre}.mlp_norm"), &add(&h, &f));
    if !with_glimpse {
        return h;
    }
    let g = glimpse(p, &format!("{pre}.glimpse"), &h, mask);
    p.norm(&format!("{pre}.glimpse_norm"), &add(&h, &g))
}

pub fn positional(n: usize, k: usize) -> Mat {
    (0..n)
        .map(|pos| {
            (0..k)
                .map(|j| {
                    let angle = pos as f64 / 10000f64.powf((2 * (j / 2)) as f64 / k as f64);
                    if j % 2 == 0 { angle.sin() } else { angle.cos() }
                })
                .collect()
        })
        .collect()
}

pub fn embed(p: &Params, cfg: &EncoderConfig, input: &ModalityInput) -> Mat {
    let mc = cfg.modality(input.modality).unwrap();
    let h = p.affine(&format!("{}.input", input.modality.name()), &to_mat(&input.features));
    if mc.positional_encoding { add(&h, &positional(mc.length, cfg.hidden)) } else { h }
}

/// Per-block representations of every modality (entry 0 = embedding).
pub fn encode_trace(model: &TbjeModel, inputs: &[ModalityInput]) -> Vec<(Modality, Vec<Mat>)> {
    let cfg = model.config();
    let p = Params(model);
    let find = |m: Modality| inputs.iter().find(|i| i.modality == m).unwrap();
    let order = cfg.processing_order();
    let mut reps: Vec<(Modality, Vec<Mat>)> = order.iter().map(|&m| (m, vec![embed(&p, cfg, find(m))])).collect();
    let joint = cfg.variant == Variant::Joint;
    for b in 0..cfg.blocks {
        let x_b = reps[0].1[b].clone();
        let x_mask = find(cfg.primary).mask.clone();
        for (m, list) in reps.iter_mut() {
            let ctx = (*m != cfg.primary).then_some((&x_b, x_mask.as_slice()));
            let next = block(&p, cfg, *m, b, &list[b], &find(*m).mask, ctx, joint);
            list.push(next);
        }
    }
    reps
}

/// Logits of one example.
pub fn logits(model: &TbjeModel, inputs: &[ModalityInput]) -> Vec<f64> {
    let cfg = model.config();
    let p = Params(model);
    let mut s = vec![0.0; cfg.hidden];
    for (m, list) in encode_trace(model, inputs) {
        let mask = &inputs.iter().find(|i| i.modality == m).unwrap().mask;
        let g = glimpse(&p, &format!("{}.final_glimpse", m.name()), list.last().unwrap(), mask);
        for (acc, v) in s.iter_mut().zip(&g[0]) {
            *acc += v;
        }
    }
    let n = p.norm("classifier.norm", &vec![s]);
    p.affine("classifier.output", &n).remove(0)
}

pub fn max_diff(a: &Mat, b: &Tensor) -> f64 {
    assert_eq!(a.len() * a[0].len(), b.len(), "shape mismatch");
    a.iter().flatten().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Small random configuration over `modalities` with `blocks` blocks.
pub fn random_config(rng: &mut impl Rng, modalities: &[Modality], blocks: usize) -> EncoderConfig {
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let hidden = heads * rng.random_range(1..4);
    EncoderConfig {
        blocks,
        hidden,
        heads,
        ff_hidden: rng.random_range(1..9),
        modalities: modalities
            .iter()
            .map(|&m| ModalityConfig {
                modality: m,
                width: rng.random_range(1..6),
                length: rng.random_range(1..6),
                positional_encoding: rng.random_bool(0.5),
            })
            .collect(),
        primary: modalities[0],
        variant: EncoderConfig::default_variant(modalities.len()),
        task: [Task::Sentiment2, Task::Sentiment7, Task::Emotions6][rng.random_range(0..3)],
        ..Default::default()
    }
}

/// Model with every parameter redrawn uniformly in ±0.8, so biases, gains
/// and scores all carry signal.
pub fn random_model(cfg: EncoderConfig, seed: u64) -> TbjeModel {
    let mut model = TbjeModel::new(cfg, seed).unwrap();
    let mut rng = stream(seed, StreamKind::Synthetic, 100);
    for (_, t) in model.params_mut().iter_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    model
}

/// Random inputs for `cfg`; each modality keeps a random non-empty prefix
/// of valid rows and zeroes the rest.
pub fn random_inputs(rng: &mut impl Rng, cfg: &EncoderConfig) -> Vec<ModalityInput> {
    cfg.modalities
        .iter()
        .map(|mc| {
            let valid = rng.random_range(1..=mc.length);
            let mask: Vec<bool> = (0..mc.length).map(|i| i < valid).collect();
            let data = (0..mc.length * mc.width)
                .map(|j| if mask[j / mc.width] { rng.random_range(-2.0..2.0) } else { 0.0 })
                .collect();
            ModalityInput::new(mc.modality, Tensor::matrix(mc.length, mc.width, data).unwrap(), mask).unwrap()
        })
        .collect()
}

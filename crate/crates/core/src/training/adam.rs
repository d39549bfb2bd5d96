use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam. Moments are created lazily, shaped like their
/// parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adam {
    pub first: BTreeMap<String, Tensor>,
    pub second: BTreeMap<String, Tensor>,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: BETA1, beta2: BETA2, eps: EPSILON }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update of every parameter in `params`. Parameters absent from
    /// `grads` receive a zero gradient. Nothing is modified when any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        self.step_with(params, grads, lr, AdamHyper::default())
    }

    pub fn step_with(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
        hyper: AdamHyper,
    ) -> Result<()> {
        for (name, g) in grads {
            let Some(p) = params.get(name) else {
                return Err(Error::Contract(format!("gradient for unknown parameter {name}")));
            };
            if p.shape() != g.shape() {
                return Err(Error::shape("adam gradient", p.shape(), g.shape()));
            }
            if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient {bad} in parameter {name}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - hyper.beta1.powi(t);
        let c2 = 1.0 - hyper.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let v = self.second.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let g = grads.get(name);
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
            }
        }
        Ok(())
    }
}

//! Synthetic labelled data that is separable by construction.
//!
//! Example `i` belongs to sentiment bin `i mod 7` (raw score `bin − 3`).
//! Every modality gets one random prototype sequence per bin; an example is
//! its bin's prototype plus small noise, with a random number of trailing
//! rows masked out. Emotion `j` is on when `(bin + j)` is even, so the six
//! flags are a function of the bin as well.

use rand::Rng as _;

use crate::error::Result;
use crate::model::{ModalityConfig, ModalityInput};
use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;
use crate::training::{Example, Label};

pub const BINS: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub examples: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { examples: 32, noise: 0.1, seed: 0 }
    }
}

pub fn generate(modalities: &[ModalityConfig], spec: &SyntheticSpec) -> Result<Vec<Example>> {
    let prototypes: Vec<Vec<Vec<f64>>> = modalities
        .iter()
        .enumerate()
        .map(|(m, mc)| {
            let mut rng = stream(spec.seed, StreamKind::Synthetic, 1000 + m as u64);
            (0..BINS)
                .map(|_| (0..mc.length * mc.width).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    let mut rng = stream(spec.seed, StreamKind::Synthetic, 1);
    (0..spec.examples)
        .map(|i| {
            let bin = i % BINS;
            let inputs = modalities
                .iter()
                .zip(&prototypes)
                .map(|(mc, protos)| {
                    let valid = rng.random_range(mc.length.div_ceil(2)..=mc.length).max(1);
                    let mask: Vec<bool> = (0..mc.length).map(|r| r < valid).collect();
                    let data = protos[bin]
                        .iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let noise = rng.random_range(-spec.noise..=spec.noise);
                            if mask[j / mc.width] { p + noise } else { 0.0 }
                        })
                        .collect();
                    ModalityInput::new(mc.modality, Tensor::matrix(mc.length, mc.width, data)?, mask)
                })
                .collect::<Result<Vec<_>>>()?;
            let emotions = std::array::from_fn(|j| (bin + j).is_multiple_of(2));
            Ok(Example { inputs, label: Label::new(bin as f64 - 3.0, emotions)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Modality;

    #[test]
    fn generation_is_seeded_and_labelled_by_bin() {
        let mc = [ModalityConfig { modality: Modality::Visual, width: 3, length: 4, positional_encoding: false }];
        let a = generate(&mc, &SyntheticSpec::default()).unwrap();
        let b = generate(&mc, &SyntheticSpec::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        assert_eq!(a[9].label.sentiment, -1.0);
        assert!(a.iter().all(|e| e.inputs[0].mask[0] && e.inputs[0].mask[1]));
    }
}

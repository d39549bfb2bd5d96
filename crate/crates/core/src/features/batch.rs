use crate::error::{Error, Result};
use crate::model::{Modality, ModalityInput};
use crate::tensor::Tensor;

/// Fits a `t × w` sequence to exactly `n` rows: longer inputs keep their
/// first `n` rows, shorter ones are zero-padded at the tail. The mask marks
/// rows that carry real data.
pub fn pad_truncate(sequence: &Tensor, n: usize) -> Result<(Tensor, Vec<bool>)> {
    if sequence.rank() != 2 {
        return Err(Error::Contract(format!("expected a t×w sequence, got {:?}", sequence.shape())));
    }
    if n == 0 {
        return Err(Error::Contract("padded length must be >= 1".into()));
    }
    let (t, w) = (sequence.shape()[0], sequence.shape()[1]);
    let kept = t.min(n);
    let mut data = sequence.data()[..kept * w].to_vec();
    data.resize(n * w, 0.0);
    let mask = (0..n).map(|i| i < kept).collect();
    Ok((Tensor::matrix(n, w, data)?, mask))
}

/// Padded features of one modality for a batch: `batch × N × width`, with a
/// row mask per example. Masked rows are zero and every example has at
/// least one valid row.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityBatch {
    pub modality: Modality,
    features: Tensor,
    mask: Vec<bool>,
}

impl ModalityBatch {
    pub fn new(modality: Modality, features: Tensor, mask: Vec<bool>) -> Result<Self> {
        if features.rank() != 3 {
            return Err(Error::Contract(format!(
                "{modality} batch must be batch×N×width, got {:?}",
                features.shape()
            )));
        }
        let (b, n, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
        if mask.len() != b * n {
            return Err(Error::shape("batch mask", features.shape(), &[mask.len()]));
        }
        for i in 0..b {
            let row_mask = &mask[i * n..(i + 1) * n];
            if !row_mask.iter().any(|&v| v) {
                return Err(Error::Contract(format!("{modality} example {i} has no valid rows")));
            }
            for (r, _) in row_mask.iter().enumerate().filter(|(_, v)| !**v) {
                let start = (i * n + r) * w;
                if features.data()[start..start + w].iter().any(|&v| v != 0.0) {
                    return Err(Error::Contract(format!(
                        "{modality} example {i} row {r} is masked but not zero"
                    )));
                }
            }
        }
        Ok(Self { modality, features, mask })
    }

    pub fn from_examples(modality: Modality, examples: Vec<(Tensor, Vec<bool>)>) -> Result<Self> {
        let mut tensors = Vec::with_capacity(examples.len());
        let mut mask = Vec::new();
        for (t, m) in examples {
            mask.extend(m);
            tensors.push(t);
        }
        Self::new(modality, Tensor::stack(&tensors)?, mask)
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn length(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.features.shape()[2]
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn example_mask(&self, i: usize) -> &[bool] {
        let n = self.length();
        &self.mask[i * n..(i + 1) * n]
    }

    pub fn example(&self, i: usize) -> Result<ModalityInput> {
        ModalityInput::new(self.modality, self.features.index_first(i)?, self.example_mask(i).to_vec())
    }
}

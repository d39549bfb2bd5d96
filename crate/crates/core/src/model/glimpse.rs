//! Soft-attention glimpses.
//!
//! Rows of `M` (N×k) are embedded once into width 2k by a shared affine map;
//! glimpse `i` scores every embedded row with its own vector (column `i` of
//! `scores`), takes a masked softmax over the N rows, and returns the
//! weighted sum of the rows of `M`. Stacking the G results gives a G×k
//! matrix.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GlimpseParams {
    /// Shared embedding, k → 2k.
    pub embed: Linear,
    /// One scoring vector per column, 2k × G.
    pub scores: Var,
}

impl GlimpseParams {
    pub fn count(&self, tape: &Tape) -> usize {
        tape.shape(self.scores)[1]
    }
}

/// Attention weights, N×G: column `i` is the distribution of glimpse `i`
/// over the rows of `m`.
pub fn glimpse_weights(tape: &mut Tape, m: Var, params: &GlimpseParams, mask: Option<&[bool]>) -> Result<Var> {
    if let Some(mask) = mask {
        if mask.len() != tape.shape(m)[0] {
            return Err(Error::shape("glimpse mask", tape.shape(m), &[mask.len()]));
        }
        if !mask.iter().any(|&v| v) {
            return Err(Error::Contract("glimpse over a fully masked sequence".into()));
        }
    }
    let embedded = params.embed.forward(tape, m)?;
    let scores = tape.matmul(embedded, params.scores)?;
    tape.softmax(scores, 0, mask)
}

/// Stacked glimpses, G×k.
pub fn glimpse(tape: &mut Tape, m: Var, params: &GlimpseParams, mask: Option<&[bool]>) -> Result<Var> {
    let weights = glimpse_weights(tape, m, params, mask)?;
    let wt = tape.transpose(weights)?;
    tape.matmul(wt, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn params(tape: &mut Tape, k: usize, g: usize, scores: Vec<f64>) -> GlimpseParams {
        let w: Vec<f64> = (0..k * 2 * k).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        GlimpseParams {
            embed: Linear {
                weight: tape.constant(Tensor::matrix(k, 2 * k, w).unwrap()),
                bias: tape.constant(Tensor::full(vec![2 * k], 0.1)),
            },
            scores: tape.constant(Tensor::matrix(2 * k, g, scores).unwrap()),
        }
    }

    #[test]
    fn single_row_is_returned_by_every_glimpse() {
        let mut tape = Tape::new();
        let p = params(&mut tape, 2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3, 1.0, 1.0, 1.0, -3.0, 0.0, 4.0]);
        let m = tape.constant(Tensor::matrix(1, 2, vec![1.5, -0.5]).unwrap());
        let out = glimpse(&mut tape, m, &p, None).unwrap();
        assert_eq!(tape.shape(out), &[3, 2]);
        for r in 0..3 {
            assert_eq!(tape.value(out).row(r), &[1.5, -0.5]);
        }
    }

    #[test]
    fn zero_scores_give_the_mean_of_valid_rows() {
        let mut tape = Tape::new();
        let p = params(&mut tape, 2, 4, vec![0.0; 16]);
        let m = tape.constant(Tensor::matrix(4, 2, vec![1., 2., 3., 4., 5., 6., 100., 100.]).unwrap());
        let out = glimpse(&mut tape, m, &p, Some(&[true, true, true, false])).unwrap();
        for r in 0..4 {
            let row = tape.value(out).row(r);
            assert!((row[0] - 3.0).abs() < 1e-12 && (row[1] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_masked_input_is_rejected() {
        let mut tape = Tape::new();
        let p = params(&mut tape, 2, 2, vec![0.0; 8]);
        let m = tape.constant(Tensor::zeros(vec![2, 2]));
        assert!(matches!(
            glimpse(&mut tape, m, &p, Some(&[false, false])),
            Err(Error::Contract(_))
        ));
    }
}

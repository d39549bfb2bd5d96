use crate::error::{Error, Result};
use crate::metrics::{accuracy, multilabel_accuracy};
use crate::model::{ModalityInput, Task, TbjeModel};
use crate::tape::sigmoid;
use crate::tensor::Tensor;
use crate::training::Label;

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Eval-mode class probabilities, `batch × outputs`: softmax rows for the
/// sentiment tasks, independent sigmoids for emotions.
pub fn probabilities<E: AsRef<[ModalityInput]>>(model: &TbjeModel, examples: &[E]) -> Result<Tensor> {
    if examples.is_empty() {
        return Err(Error::Contract("no examples to predict".into()));
    }
    let multi = model.config().task.is_multi_label();
    let rows = examples
        .iter()
        .map(|ex| {
            let logits = model.logits(ex.as_ref())?;
            Ok(if multi { logits.data().iter().map(|&z| sigmoid(z)).collect() } else { softmax_row(logits.data()) })
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Mean of the members' probabilities. All members must share one config.
pub fn ensemble_predict<E: AsRef<[ModalityInput]>>(models: &[TbjeModel], examples: &[E]) -> Result<Tensor> {
    let first = models.first().ok_or_else(|| Error::Contract("ensemble is empty".into()))?;
    for (i, m) in models.iter().enumerate().skip(1) {
        let diffs = m.config().differences(first.config());
        if !diffs.is_empty() {
            return Err(Error::Config(format!("ensemble member {i} differs from member 0 ({})", diffs.join("; "))));
        }
    }
    // Accumulated as offsets from member 0 so identical members reproduce
    // member 0's probabilities exactly.
    let base = probabilities(first, examples)?;
    let mut offset = vec![0.0; base.len()];
    for m in &models[1..] {
        let p = probabilities(m, examples)?;
        for ((o, v), b) in offset.iter_mut().zip(p.data()).zip(base.data()) {
            *o += v - b;
        }
    }
    let n = models.len() as f64;
    let data = base.data().iter().zip(&offset).map(|(b, o)| b + o / n).collect();
    Tensor::new(base.shape().to_vec(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Flags(Vec<[bool; 6]>),
}

/// Argmax (first maximum wins) for sentiment, probability above 0.5 for
/// each emotion.
pub fn decide(probs: &Tensor, task: Task) -> Result<Predictions> {
    if probs.rank() != 2 || probs.cols() != task.outputs() {
        return Err(Error::shape("probabilities vs task", probs.shape(), &[task.outputs()]));
    }
    let rows = (0..probs.rows()).map(|r| probs.row(r));
    Ok(if task.is_multi_label() {
        Predictions::Flags(rows.map(|r| std::array::from_fn(|j| r[j] > 0.5)).collect())
    } else {
        Predictions::Classes(
            rows.map(|r| r.iter().enumerate().fold(0, |best, (j, &v)| if v > r[best] { j } else { best }))
                .collect(),
        )
    })
}

/// Exact-match accuracy for sentiment, mean per-emotion binary accuracy for
/// emotions.
pub fn task_accuracy(pred: &Predictions, labels: &[Label], task: Task, boundary: f64) -> Result<f64> {
    match pred {
        Predictions::Classes(p) => {
            let gold = labels.iter().map(|l| l.class(task, boundary)).collect::<Result<Vec<_>>>()?;
            accuracy(p, &gold)
        }
        Predictions::Flags(p) => {
            let gold: Vec<[bool; 6]> = labels.iter().map(|l| l.emotions).collect();
            multilabel_accuracy(p, &gold)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_the_first_tie() {
        let p = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        assert_eq!(decide(&p, Task::Sentiment2).unwrap(), Predictions::Classes(vec![0, 1]));
    }

    #[test]
    fn emotion_threshold_is_strict() {
        let p = Tensor::from_rows(&[vec![0.5, 0.51, 0.0, 1.0, 0.49, 0.5]]).unwrap();
        let Predictions::Flags(f) = decide(&p, Task::Emotions6).unwrap() else { panic!() };
        assert_eq!(f[0], [false, true, false, true, false, false]);
    }
}

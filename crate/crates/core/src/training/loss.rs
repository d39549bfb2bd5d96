use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::sentiment_class;
use crate::model::Task;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const EMOTIONS: [&str; 6] = ["happy", "sad", "angry", "fear", "disgust", "surprise"];

/// Raw annotations of one utterance. Binning into task classes happens at
/// train and evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    /// Sentiment on the [-3, 3] scale.
    pub sentiment: f64,
    pub emotions: [bool; 6],
}

impl Label {
    pub fn new(sentiment: f64, emotions: [bool; 6]) -> Result<Self> {
        if !(-3.0..=3.0).contains(&sentiment) {
            return Err(Error::Contract(format!("sentiment {sentiment} outside [-3, 3]")));
        }
        Ok(Self { sentiment, emotions })
    }

    /// Class index for the sentiment tasks.
    pub fn class(&self, task: Task, boundary: f64) -> Result<usize> {
        sentiment_class(self.sentiment, task, boundary)
    }

    /// Training target row for `task`: one-hot class or emotion flags.
    pub fn target(&self, task: Task, boundary: f64) -> Result<Vec<f64>> {
        match task {
            Task::Emotions6 => Ok(self.emotions.iter().map(|&e| f64::from(u8::from(e))).collect()),
            _ => {
                let mut row = vec![0.0; task.outputs()];
                row[self.class(task, boundary)?] = 1.0;
                Ok(row)
            }
        }
    }
}

/// Mean loss over a batch of `batch × outputs` logits: softmax cross-entropy
/// for the sentiment tasks, the mean of the six sigmoid binary
/// cross-entropies for emotions.
pub fn loss(tape: &mut Tape, logits: Var, labels: &[Label], task: Task, boundary: f64) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() || shape[1] != task.outputs() {
        return Err(Error::shape("loss logits vs labels", &shape, &[labels.len(), task.outputs()]));
    }
    let rows = labels
        .iter()
        .map(|l| l.target(task, boundary))
        .collect::<Result<Vec<_>>>()?;
    let targets = Tensor::from_rows(&rows)?;
    if task.is_multi_label() {
        let negatives = tape.constant(Tensor::new(shape.clone(), targets.data().iter().map(|y| 1.0 - y).collect())?);
        let positives = tape.constant(targets);
        let log_p = tape.log_sigmoid(logits);
        let flipped = tape.scale(logits, -1.0);
        let log_q = tape.log_sigmoid(flipped);
        let a = tape.mul(positives, log_p)?;
        let b = tape.mul(negatives, log_q)?;
        let ll = tape.add(a, b)?;
        let mean = tape.mean(ll);
        Ok(tape.scale(mean, -1.0))
    } else {
        let targets = tape.constant(targets);
        let log_p = tape.log_softmax(logits, 1)?;
        let picked = tape.mul(targets, log_p)?;
        let total = tape.sum(picked);
        Ok(tape.scale(total, -1.0 / labels.len() as f64))
    }
}

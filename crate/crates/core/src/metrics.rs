//! Evaluation metrics: accuracy, positive-class (unweighted) F1 and
//! support-weighted F1, plus the binning of raw sentiment scores.

use crate::error::{Error, Result};
use crate::model::Task;

fn check_lengths(pred: usize, gold: usize) -> Result<()> {
    if pred != gold {
        return Err(Error::Contract(format!("{pred} predictions for {gold} gold labels")));
    }
    if gold == 0 {
        return Err(Error::Contract("metrics need at least one example".into()));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Per-class binary accuracy averaged over classes. Every row must have
/// the same number of classes.
pub fn multilabel_accuracy<R: AsRef<[bool]>>(pred: &[R], gold: &[R]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    let classes = gold[0].as_ref().len();
    if classes == 0 {
        return Err(Error::Contract("multi-label rows are empty".into()));
    }
    let mut hits = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p.len() != classes || g.len() != classes {
            return Err(Error::Contract("multi-label rows differ in width".into()));
        }
        hits += p.iter().zip(g).filter(|(a, b)| a == b).count();
    }
    Ok(hits as f64 / (gold.len() * classes) as f64)
}

/// Binary confusion tallies with `true` as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    /// Panics if the slices differ in length.
    pub fn tally(pred: &[bool], gold: &[bool]) -> Self {
        assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
        let mut c = Self::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positive_support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negative_support(&self) -> usize {
        self.tn + self.fp
    }

    /// Same counts with the negative class treated as positive.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }

    /// Positive-class F1 as the exact fraction `2tp / (2tp + fp + fn)`,
    /// `0 / 1` when there are no true positives.
    fn f1_fraction(&self) -> (u128, u128) {
        if self.tp == 0 {
            (0, 1)
        } else {
            (2 * self.tp as u128, (2 * self.tp + self.fp + self.fn_) as u128)
        }
    }

    /// F1 of the positive class; 0 when precision + recall is 0.
    pub fn f1(&self) -> f64 {
        let (num, den) = self.f1_fraction();
        num as f64 / den as f64
    }

    /// Support-weighted mean of the positive- and negative-class F1.
    ///
    /// Evaluated as one integer fraction and a single division, so the
    /// result is the correctly rounded value for any realistic count.
    pub fn weighted_f1(&self) -> f64 {
        let n = self.total() as u128;
        if n == 0 {
            return 0.0;
        }
        let (a, b) = self.f1_fraction();
        let (c, d) = self.swapped().f1_fraction();
        let num = self.positive_support() as u128 * a * d + self.negative_support() as u128 * c * b;
        num as f64 / (n * b * d) as f64
    }
}

/// F1 of the `positive` label.
pub fn f1_unweighted<T: PartialEq>(pred: &[T], gold: &[T], positive: &T) -> f64 {
    let p: Vec<bool> = pred.iter().map(|v| v == positive).collect();
    let g: Vec<bool> = gold.iter().map(|v| v == positive).collect();
    ConfusionCounts::tally(&p, &g).f1()
}

/// Support-weighted F1 over the two classes of a binary labelling.
pub fn f1_weighted(pred: &[bool], gold: &[bool]) -> f64 {
    ConfusionCounts::tally(pred, gold).weighted_f1()
}

fn check_raw(raw: f64) -> Result<()> {
    if !(-3.0..=3.0).contains(&raw) {
        return Err(Error::Contract(format!("raw sentiment {raw} outside [-3, 3]")));
    }
    Ok(())
}

/// Seven ordinal bins: round half away from zero, then shift to 0..=6.
pub fn sentiment_bins(raw: f64) -> Result<usize> {
    check_raw(raw)?;
    Ok((raw.round() + 3.0) as usize)
}

/// 0 for raw scores below `boundary`, 1 otherwise.
pub fn sentiment_binary(raw: f64, boundary: f64) -> Result<usize> {
    check_raw(raw)?;
    Ok(usize::from(raw >= boundary))
}

/// Class index of a raw sentiment score for a sentiment task.
pub fn sentiment_class(raw: f64, task: Task, boundary: f64) -> Result<usize> {
    match task {
        Task::Sentiment2 => sentiment_binary(raw, boundary),
        Task::Sentiment7 => sentiment_bins(raw),
        Task::Emotions6 => Err(Error::Contract("emotions-6 has no sentiment class".into())),
    }
}

use serde::{Deserialize, Serialize};

/// What the schedule did after observing one epoch's validation accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transition {
    Improved,
    /// Learning rate multiplied by the decay factor; `lr` is the new rate.
    Decayed { lr: f64 },
    /// Non-improving epoch after the decays ran out; `count` in a row.
    Stagnant { count: usize },
    Stop,
}

/// Plateau decay followed by early stopping. An epoch improves only when
/// its accuracy is strictly above the best seen so far. Each non-improving
/// epoch spends one decay while decays remain; afterwards `patience`
/// consecutive non-improving epochs stop the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    pub decay_factor: f64,
    pub max_decays: usize,
    pub patience: usize,
    pub best: Option<f64>,
    pub decays_used: usize,
    pub since_improvement: usize,
    pub stopped: bool,
}

impl Schedule {
    pub fn new(lr: f64, decay_factor: f64, max_decays: usize, patience: usize) -> Self {
        Self {
            lr,
            decay_factor,
            max_decays,
            patience,
            best: None,
            decays_used: 0,
            since_improvement: 0,
            stopped: false,
        }
    }

    pub fn observe(&mut self, accuracy: f64) -> Transition {
        if self.best.is_none_or(|b| accuracy > b) {
            self.best = Some(accuracy);
            self.since_improvement = 0;
            return Transition::Improved;
        }
        if self.decays_used < self.max_decays {
            self.decays_used += 1;
            self.lr *= self.decay_factor;
            return Transition::Decayed { lr: self.lr };
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.patience {
            self.stopped = true;
            Transition::Stop
        } else {
            Transition::Stagnant { count: self.since_improvement }
        }
    }
}

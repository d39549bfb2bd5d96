//! Losses, the Adam optimiser, the plateau-decay / early-stop schedule,
//! the training loop and probability-averaging ensembles.

pub mod adam;
mod fit;
mod loss;
mod predict;
pub mod schedule;

pub use adam::Adam;
pub use fit::{
    evaluate_accuracy, fit, fit_with, EpochRecord, Example, FitOutcome, Flow, TrainConfig, TrainState,
};
pub use loss::{loss, Label, EMOTIONS};
pub use predict::{decide, ensemble_predict, probabilities, task_accuracy, Predictions};
pub use schedule::{Schedule, Transition};

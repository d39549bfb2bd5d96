//! Transformer-based joint encoding (TBJE) for multimodal sentiment and
//! emotion classification.
//!
//! ```text
//! linguistic ─► projection ─► [self-attn ─► MLP ─► glimpse] × B ─┐
//!                                   │ (block b)                  ├─► size-1 glimpses ─► Σ ─► LayerNorm ─► W_a
//! acoustic   ─► projection ─► [co-attn ─► MLP ─► glimpse] × B ───┘
//! ```
//!
//! The crate carries its own small reverse-mode autodiff ([`tape`]), the
//! model ([`model`]), feature front-ends ([`features`]), the training
//! recipe ([`training`]), evaluation metrics ([`metrics`]) and a finite
//! difference gradient checker ([`gradcheck`]).

pub mod error;
pub mod features;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{EncoderConfig, Modality, ModalityInput, Task, TbjeModel};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

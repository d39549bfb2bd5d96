//! Deterministic feature extraction: linguistic tokens and embeddings,
//! acoustic log-mel frames, and fixed-length padding into batches.

mod batch;
pub mod mel;
pub mod tokenize;
pub mod vocab;

pub use batch::{pad_truncate, ModalityBatch};
pub use mel::{mel_spectrogram, resample_linear, MelConfig, MelOutput};
pub use tokenize::{tokenize, tokenize_flagged, Tokenized};
pub use vocab::{Vocabulary, EMBEDDING_DIM};

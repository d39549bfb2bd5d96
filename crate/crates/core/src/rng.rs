//! Seeded, splittable random streams.
//!
//! Every stochastic step (initialisation, shuffling, dropout, synthetic
//! data) draws from a ChaCha stream addressed by `(seed, stream id)`, so
//! two components never share a generator and any stream can be rebuilt
//! from scratch when a run is resumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const KIND_SHIFT: u32 = 56;

/// Purpose tags occupying the high byte of a stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamKind {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Sampling = 4,
    Synthetic = 5,
}

/// A generator for `seed` positioned on a dedicated stream.
pub fn stream(seed: u64, kind: StreamKind, index: u64) -> Rng {
    debug_assert!(index < (1 << KIND_SHIFT));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << KIND_SHIFT) | index);
    rng
}

/// Stream index for dropout in a given epoch and mini-batch.
pub fn batch_index(epoch: usize, batch: usize) -> u64 {
    ((epoch as u64) << 24) | (batch as u64 & 0xff_ffff)
}

//! Named random streams derived from one master seed.
//!
//! Every random draw in a run comes from a stream keyed by
//! `(master seed, purpose, round, entity)`. Streams never share state, so
//! results do not depend on the order in which devices are processed or on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Dataset = 1,
    Partition = 2,
    Init = 3,
    Batch = 4,
    GradientTie = 5,
    MajorityTie = 6,
    Dither = 7,
    Channel = 8,
    Noise = 9,
    Detect = 10,
    Waveform = 11,
    Validation = 12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: Purpose, round: u64, entity: u64) -> StreamRng {
        let mut h = Sha256::new();
        h.update(b"otamv-stream-v1");
        h.update(self.master.to_le_bytes());
        h.update([purpose as u8]);
        h.update(round.to_le_bytes());
        h.update(entity.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

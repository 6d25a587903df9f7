//! Reproducible random streams.
//!
//! Every replicate draws from its own ChaCha8 stream selected by
//! `(master seed, stream index)`, so replicates can be generated in any order
//! or on any number of workers with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Bits reserved for the replicate index inside a stream id; the upper bits
/// carry a tag separating independent families of streams.
const TAG_SHIFT: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed { master, stream: 0 }
    }

    /// Stream of replicate `index`.
    pub fn replicate(self, index: u64) -> Self {
        self.tagged(0, index)
    }

    /// Stream `index` of the family `tag`; families never overlap.
    pub fn tagged(self, tag: u64, index: u64) -> Self {
        debug_assert!(index < (1 << TAG_SHIFT));
        Seed {
            master: self.master,
            stream: (tag << TAG_SHIFT) | index,
        }
    }

    pub fn rng(self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

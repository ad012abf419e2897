//! Seeded, splittable random streams.
//!
//! A [`SeedSpec`] names a ChaCha8 stream: `seed` keys the cipher and `stream`
//! selects its 64-bit stream id. Batches are cut into chunks of
//! [`CHUNK`](crate::par::CHUNK) draws and chunk `c` starts at word position
//! `c << 40`, so any chunk can be generated without touching the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

const CHUNK_WORD_SHIFT: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derived substream for a labelled purpose. Distinct labels give
    /// unrelated streams under the same seed.
    pub fn child(self, label: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x9E37_79B9))),
        }
    }

    pub fn rng(self) -> StreamRng {
        self.chunk_rng(0)
    }

    pub fn chunk_rng(self, chunk: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(chunk) << CHUNK_WORD_SHIFT);
        rng
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::new(7, 0)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

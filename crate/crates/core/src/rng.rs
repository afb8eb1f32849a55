//! Seeded, reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and selected by a
//! 64-bit stream id. ChaCha streams sharing a key are disjoint keystreams, so
//! per-layer or per-chain generators stay independent and reproducible no matter
//! how work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derive a child stream: same key space, a new seed mixed from this
    /// stream's identity and `tag`. Used to fan out chains and layers.
    pub fn derive(&self, tag: u64) -> Self {
        Self::new(mix(self.seed ^ mix(self.stream_id)), tag)
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pack a (phase, layer) or (chain, role) pair into one stream id.
pub fn stream_key(major: u32, minor: u32) -> u64 {
    ((major as u64) << 32) | minor as u64
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

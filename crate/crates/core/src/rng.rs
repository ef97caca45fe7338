//! Named random substreams derived from one 64-bit seed.
//!
//! Each stage asks for its own stream by name, so adding draws to one stage
//! leaves every other stage untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed splitter keyed by stream names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the substream called `name`.
    pub fn derive(&self, name: &str) -> u64 {
        splitmix64(self.seed ^ fnv1a(name.as_bytes()))
    }

    /// Child splitter rooted at the substream called `name`.
    pub fn child(&self, name: &str) -> SeedStream {
        SeedStream::new(self.derive(name))
    }

    /// Generator for the substream called `name`.
    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(name))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

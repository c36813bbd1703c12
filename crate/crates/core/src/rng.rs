//! Deterministic randomness.
//!
//! Every random decision in the pipeline draws from a stream derived from a
//! single root [`RngSeed`]. Child streams are keyed by a textual domain label
//! plus an invocation index and hashed through FNV-1a / SplitMix64, so a
//! module always sees the same stream for the same (seed, domain, index)
//! triple no matter what ran before it or how many worker threads exist.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Root seed for one pipeline run. Identical seed plus identical inputs
/// yields bit-identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derive the child seed for `domain` at invocation `index`.
    pub fn child(self, domain: &str, index: u64) -> RngSeed {
        RngSeed(child_seed(self.0, domain, index))
    }

    /// Instantiate the generator for this stream.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream-splitting scheme: `splitmix64(splitmix64(parent ^ fnv1a(domain)) ^ index)`.
pub fn child_seed(parent: u64, domain: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ fnv1a(domain.as_bytes())) ^ index)
}

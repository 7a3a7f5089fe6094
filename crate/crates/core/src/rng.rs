//! Named random streams.
//!
//! A single user seed fans out into independent streams (process sampling,
//! network initialisation, shuffling, improvement sampling, ...). Streams are
//! addressed by name and optional integer indices so that adding draws to one
//! component never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stream in the crate.
pub type StreamRng = ChaCha8Rng;

/// A node in the stream derivation tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamSeed(u64);

impl StreamSeed {
    pub const fn new(seed: u64) -> Self {
        StreamSeed(seed)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// Child stream addressed by name.
    pub fn derive(self, name: &str) -> StreamSeed {
        StreamSeed(splitmix64(self.0 ^ fnv1a(name.as_bytes())))
    }

    /// Child stream addressed by an integer index.
    pub fn index(self, i: u64) -> StreamSeed {
        StreamSeed(splitmix64(splitmix64(self.0).wrapping_add(i.wrapping_mul(0xD6E8_FEB8_6659_FD93))))
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
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
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

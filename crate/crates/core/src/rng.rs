//! Named random sub-streams.
//!
//! Every stochastic component draws from its own ChaCha stream keyed by the
//! run seed, a stream name and an index, so any single component (one epoch's
//! dropout, one step's batch) can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for the `(seed, name, index)` triple.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    // FNV-1a over the stream name.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(splitmix64(seed ^ h).wrapping_add(splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, index))
}

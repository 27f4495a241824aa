//! Named, seekable random streams.
//!
//! Every consumer derives its generator from a root seed, a stage name and a
//! chunk index. Work split into fixed-size chunks therefore draws the same
//! numbers regardless of how many threads execute it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Shots or samples per independently seeded chunk.
pub const CHUNK: usize = 4096;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for chunk `index` of the stream `name` under `seed`.
pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one per sweep point.
pub fn child_seed(seed: u64, name: &str, index: u64) -> u64 {
    fnv1a(&[seed.to_le_bytes(), fnv1a(name.as_bytes()).to_le_bytes(), index.to_le_bytes()].concat())
}

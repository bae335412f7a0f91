//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream keyed by the
//! experiment seed and addressed by a tuple of counters (purpose, epoch or
//! iteration, episode index, ...). The key is the seed as 8 little-endian
//! bytes followed by 24 zero bytes. The 64-bit stream id is
//! `fold(h = 0; h = splitmix64(h ^ part))` over the counter tuple, where
//! `splitmix64` is the standard finalizer (add 0x9E3779B97F4A7C15, then
//! xor-shift-multiply by 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).
//!
//! Because streams are addressed rather than advanced, the generator state
//! of a run is fully described by its seed and progress counters.

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng as StreamRng;

pub mod purpose {
    pub const TABULAR_EPISODE: u64 = 1;
    pub const PARAM_INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const NEURAL_EPISODE: u64 = 4;
    pub const CORPUS: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const PLAY: u64 = 7;
    pub const TEST: u64 = 99;
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_id(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |h, &p| splitmix64(h ^ p))
}

pub fn stream(seed: u64, parts: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = StreamRng::from_seed(key);
    rng.set_stream(stream_id(parts));
    rng
}

/// Samples an index from `probs` by inverse CDF; the last index with
/// nonzero mass absorbs rounding.
pub fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

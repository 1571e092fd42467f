//! Counter-based deterministic randomness.
//!
//! Every random draw in the system is keyed by a tuple such as
//! `(seed, tick, index)` and hashed with a SplitMix64 finalizer. Draws are
//! therefore independent of evaluation order, which makes replay and
//! permutation-invariance tests exact.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an ordered tuple of words into one key.
pub fn key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(GOLDEN, |h, &p| mix64(h.wrapping_add(GOLDEN) ^ p))
}

/// FNV-1a over a module name, used to separate per-module streams.
pub fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for the stream of `module` at `tick`. Adding a module never perturbs
/// another module's draws.
pub fn stream_seed(master: u64, module: &str, tick: u64) -> u64 {
    key(&[master, name_hash(module), tick])
}

/// Uniform draw in `[0, 1)` from a key.
pub fn unit_f64(k: u64) -> f64 {
    (k >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A seeded generator for draws that need more than one number.
pub fn stream_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Levels in the standard-normal quantile table.
pub const GAUSS_LEVELS: usize = 1 << 16;

/// Standard-normal quantiles at the midpoints of `GAUSS_LEVELS` equal
/// probability bins. Indexing with a uniform 16-bit word gives a normal
/// draw discretised far below the 8-bit pixel quantum.
pub fn gaussian_table() -> &'static [f32] {
    static TABLE: OnceLock<Vec<f32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = Normal::standard();
        (0..GAUSS_LEVELS)
            .map(|i| n.inverse_cdf((i as f64 + 0.5) / GAUSS_LEVELS as f64) as f32)
            .collect()
    })
}

/// Add `sigma`-scaled normal noise keyed by `seed` to every sample.
/// One hash yields four draws.
pub fn add_gaussian_noise(out: &mut [f32], seed: u64, sigma: f32) {
    let table = gaussian_table();
    let mut chunks = out.chunks_mut(4);
    let mut ctr = seed;
    for chunk in &mut chunks {
        ctr = ctr.wrapping_add(GOLDEN);
        let h = mix64(ctr);
        for (j, v) in chunk.iter_mut().enumerate() {
            let idx = ((h >> (16 * j)) & 0xFFFF) as usize;
            *v += sigma * table[idx];
        }
    }
}

//! Pinned pseudo-random generator.
//!
//! All seeded behaviour in this crate uses xoshiro256** whose 256-bit state is
//! filled from the 64-bit seed by SplitMix64 (the `seed_from_u64` construction
//! of `rand_xoshiro`). Integer ranges are always sampled as `u64` so results do
//! not depend on the platform's pointer width.
//!
//! Per-item streams (one per document, per query, ...) are derived by hashing
//! the run seed together with the item key with SHA-256, which keeps decisions
//! independent of processing order.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use sha2::{Digest, Sha256};

pub type SeededRng = Xoshiro256StarStar;

pub fn from_seed(seed: u64) -> SeededRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Derive a 64-bit sub-seed from `(seed, key)`.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((key.len() as u64).to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Generator for the stream keyed by `(seed, key)`.
pub fn keyed(seed: u64, key: &str) -> SeededRng {
    from_seed(derive_seed(seed, key))
}

/// Uniform index in `0..n`. `n` must be non-zero.
pub fn index(rng: &mut SeededRng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Uniform float in `[0, 1)`.
pub fn unit(rng: &mut SeededRng) -> f64 {
    rng.random::<f64>()
}

/// `k` distinct indices from `0..n`, uniformly without replacement, in
/// sampled order (partial Fisher-Yates).
pub fn sample_indices(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Uniformly random permutation of `0..n`.
pub fn permutation(rng: &mut SeededRng, n: usize) -> Vec<usize> {
    sample_indices(rng, n, n)
}

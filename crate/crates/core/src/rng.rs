//! Deterministic random streams.
//!
//! Two flavours are used. Counter-based draws ([`uniform_at`], [`normal_at`])
//! hash `(seed, counter)` directly, so a value never depends on how many draws
//! happened before it; noise-field nodes use these. Sequential streams
//! ([`stream`]) are ChaCha8 generators keyed by a derived seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of integer labels.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(GOLDEN))))
}

/// Uniform draw in `(0, 1]` keyed by `(seed, counter)`.
pub fn uniform_at(seed: u64, counter: u64) -> f64 {
    let h = mix64(seed ^ mix64(counter));
    ((h >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw keyed by `(seed, counter)` (Box-Muller).
pub fn normal_at(seed: u64, counter: u64) -> f64 {
    let u1 = uniform_at(seed, counter.wrapping_mul(2));
    let u2 = uniform_at(seed, counter.wrapping_mul(2).wrapping_add(1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Sequential stream for `seed`.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

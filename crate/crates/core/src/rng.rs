//! Seeded random streams.
//!
//! Every stochastic operation in the crate takes an explicit `u64` seed. When
//! an operation needs many independent streams (one per row, per trial, ...)
//! it derives them from the run seed with [`stream`], so results never depend
//! on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type CfRng = ChaCha8Rng;

/// Generator for a plain seed.
pub fn seeded(seed: u64) -> CfRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-stream `id` of `seed`.
pub fn stream(seed: u64, id: u64) -> CfRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Mixes a tuple of indices into a single stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    // splitmix64 finaliser over a running hash
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Draws an index from a categorical distribution.
///
/// Entries that are exactly zero are never returned. Returns `None` when the
/// row has no positive entry.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> Option<usize> {
    let last_positive = probs.iter().rposition(|&p| p > 0.0)?;
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate().take(last_positive) {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    Some(last_positive)
}

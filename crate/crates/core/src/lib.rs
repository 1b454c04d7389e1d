//! Hardware-aware architecture search over a hybrid CNN/attention space.
//!
//! The crate covers the search space and its exact cardinality, subnet cost
//! accounting and encoding, block latency tables with linear calibration, a
//! small learned accuracy predictor, constrained evolutionary search with an
//! evolving sampling distribution, and synthetic device/accuracy oracles.

pub mod evolution;
pub mod latency;
pub mod oracle;
pub mod predictor;
pub mod space;
pub mod stats;
pub mod subnet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for item `index` of `stream` under `seed`. Parallel
/// workers use this so results do not depend on scheduling.
pub fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"hwnas-rn");
    ChaCha8Rng::from_seed(key)
}

//! Seeded, portable random streams.
//!
//! All experiments draw from ChaCha8 so results are identical across
//! platforms. Independent work items use distinct stream ids under a
//! common seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ExperimentRng = ChaCha8Rng;

/// Recorded in every run manifest.
pub const RNG_ID: &str = "ChaCha8Rng/rand_chacha-0.9";

pub fn seeded(seed: u64, stream: u64) -> ExperimentRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs up to four small indices into one stream id.
pub fn stream_id(parts: [u16; 4]) -> u64 {
    parts
        .iter()
        .fold(0u64, |acc, &p| (acc << 16) | u64::from(p))
}

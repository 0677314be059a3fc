//! Reproducible random streams keyed by `(seed, stream, block)`.
//!
//! Every task (a bootstrap replicate, a simulation replication) owns a ChaCha
//! stream, and every subject inside it owns a disjoint block of the keystream,
//! so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Keystream words reserved per block.
pub const BLOCK_WORDS: u128 = 1 << 20;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn block_rng(seed: u64, stream: u64, block: u64) -> ChaCha20Rng {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(u128::from(block) * BLOCK_WORDS);
    rng
}

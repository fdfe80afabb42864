//! Counter-keyed random streams.
//!
//! Every random quantity is drawn from a stream addressed by
//! `(seed, path, step)`, so any single path or step can be regenerated in
//! isolation and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64, path: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut h = mix64(seed);
    for (i, chunk) in out.chunks_mut(8).enumerate() {
        h = mix64(h ^ path.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(i as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    out
}

/// Stream for one path.
pub fn stream(seed: u64, path: u64) -> StreamRng {
    ChaCha8Rng::from_seed(key(seed, path))
}

/// Stream for one step of one path.
pub fn step_stream(seed: u64, path: u64, step: u64) -> StreamRng {
    let mut rng = stream(seed, path);
    rng.set_stream(step);
    rng
}

/// Repositions an existing path stream at the start of `step`.
pub fn reset_step(rng: &mut StreamRng, step: u64) {
    rng.set_stream(step);
    rng.set_word_pos(0);
}

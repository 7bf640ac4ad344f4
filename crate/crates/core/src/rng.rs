//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by the
//! user seed and a purpose tag, with the 64-bit stream id carrying the
//! `(sweep point, replication)` pair. A replication therefore sees the same
//! numbers no matter which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Data = 0x6461_7461,
    PairSample = 0x7061_6972,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one `(purpose, sweep point, replication)` cell.
pub fn stream(seed: u64, purpose: Purpose, sweep_point: u32, replication: u32) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = seed ^ (purpose as u64).rotate_left(17);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((sweep_point as u64) << 32) | replication as u64);
    rng
}

/// Derives a 64-bit seed for a nested computation (for example the pair
/// subsample used by bandwidth selection) from a replication cell.
pub fn derive_seed(seed: u64, sweep_point: u32, replication: u32) -> u64 {
    splitmix64(splitmix64(seed ^ ((sweep_point as u64) << 32 | replication as u64)) ^ 0x5eed)
}

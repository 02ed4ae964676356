//! Counter-based random substreams.
//!
//! A substream is addressed by `(seed, index, purpose)`. The seed picks a
//! ChaCha key and `(index, purpose)` picks the 64-bit stream id, so every
//! bootstrap replicate or Monte Carlo run draws from its own independent
//! stream regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    BootstrapWeights = 1,
    EvalPoints = 2,
    Design = 3,
    Noise = 4,
    ReplicateSeed = 5,
    RmsePoints = 6,
}

pub type StreamRng = ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = StreamRng::from_seed(key);
    // Indices are far below 2^56 in any realistic run.
    rng.set_stream((index << 8) | purpose as u64);
    rng
}

/// Derives a child seed, e.g. the bootstrap seed of one Monte Carlo replicate.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, index, Purpose::ReplicateSeed).next_u64()
}

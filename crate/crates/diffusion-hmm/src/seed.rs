//! Deterministic RNG stream derivation.
//!
//! Every random draw in a simulation comes from a stream addressed by a
//! path of integers under a master seed, e.g. `(master, run)` for the
//! state trajectory and `(master, run, agent, step)` for observations.
//! Streams are independent of execution order, so parallel Monte Carlo
//! runs reproduce the sequential results exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed path into a single 64-bit stream key.
pub fn derive_key(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    let mut key = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xff51_afd7_ed55_8ccd);
        key ^= splitmix64(&mut state);
    }
    key
}

/// RNG for the stream addressed by `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    let key = derive_key(master, path);
    let mut state = key;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

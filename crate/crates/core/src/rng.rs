//! Deterministic RNG substreams.
//!
//! Every source of randomness in the crate is a ChaCha12 stream keyed by
//! `(master_seed, purpose, index)`. Adding or reordering parallelism never
//! changes outputs because each consumer owns its own stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose tags for substream derivation. Values are stable; appending new
/// tags is fine, renumbering is not.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    CleanData = 1,
    AuxData = 2,
    Attack = 3,
    Mask = 4,
    Estimator = 5,
    WStar = 6,
    Instance = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix three keys into a single 64-bit seed.
pub fn mix(master: u64, purpose: u64, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ purpose.wrapping_mul(0xd6e8_feb8_6659_fd93));
    splitmix64(b ^ index.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Derive the substream for `(master, purpose, index)`.
pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(master, purpose as u64, index))
}

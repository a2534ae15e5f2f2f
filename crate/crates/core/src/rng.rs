//! Seed derivation for reproducible parallel streams.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed and
//! positioned on a stream index. Replica `r` of a run with master seed `m`
//! always reads `stream(derive_seed(m, purpose), r)`, independent of how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams used for different things disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Noise = 1,
    Chaos = 2,
    Simplex = 3,
    Synthetic = 4,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, purpose: Purpose) -> u64 {
    mix(mix(master) ^ (purpose as u64).wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Seed of replica `replica` in a run keyed by `master`. A replica's output is
/// reproducible from this value alone.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    mix(mix(master) ^ mix(replica.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit RNG. Where work is split into
//! independent tasks (simulations, candidate subsets, calibration trials) each
//! task gets its own stream derived from a master seed and a list of tags, so
//! results do not depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Creates a stream from a plain seed.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag sequence into a new seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x3c6e_f372_fe94_f82b)));
    }
    h
}

pub fn substream(master: u64, tags: &[u64]) -> StreamRng {
    seeded(derive_seed(master, tags))
}

/// Draws a fresh master seed from an existing stream.
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.gen()
}

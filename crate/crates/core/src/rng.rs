//! Named, splittable seed streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose seed is a
//! SplitMix64 mix of `(base_seed, index, purpose)`. Trajectory noise, Monte
//! Carlo draws and data generation therefore never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Stochastic gradients along a trajectory.
    Gradient,
    /// Fresh draws for Monte Carlo estimates.
    MonteCarlo,
    /// Synthetic dataset generation.
    Data,
    /// Random initial points and random problem instances.
    Instance,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Gradient => 0x6772_6164,
            Purpose::MonteCarlo => 0x6d6f_6e74,
            Purpose::Data => 0x6461_7461,
            Purpose::Instance => 0x696e_7374,
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `index` of a given purpose under `base_seed`.
pub fn derive_seed(base_seed: u64, index: u64, purpose: Purpose) -> u64 {
    let a = splitmix64(base_seed ^ purpose.tag().rotate_left(32));
    let b = splitmix64(a ^ splitmix64(index));
    splitmix64(b)
}

pub fn stream(base_seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base_seed, index, purpose))
}

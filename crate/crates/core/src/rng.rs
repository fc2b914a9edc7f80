//! Seeded, splittable random streams.
//!
//! Every random draw in the crate goes through an [`RngSpec`]: a 64-bit seed plus a
//! stream id. The generator is ChaCha8, whose stream parameter gives 2^64 independent
//! sequences per seed, so looks, the sensing matrix and each decoder fit can be drawn
//! in any order (or concurrently) and still replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Stream ids reserved for the top-level consumers.
pub mod streams {
    pub const SENSING: u64 = 1;
    pub const SCENE: u64 = 2;
    pub const LOOKS: u64 = 0x100;
    pub const DECODER: u64 = 0x200;
    pub const THEORY: u64 = 0x300;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives a child stream; distinct `tag` sequences give distinct streams.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Derives a child stream keyed by a path of indices.
    pub fn path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(*self, |spec, &t| spec.child(t))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Fills a vector with iid N(0, 1) draws.
pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

//! Reproducible noise streams.
//!
//! Every random draw is addressed by `(seed, kind, key, tick)` on a ChaCha8
//! generator: the seed selects the key, `kind` and `key` select the stream and
//! the tick selects the block position. A landmark therefore receives the same
//! noise at the same tick no matter which other features are simulated, which
//! keeps feature-count sweeps on common random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    Gps = 1,
    Odometry = 2,
    Point3d = 3,
    CameraPoint = 4,
    CameraLine = 5,
    Initial = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at the start of block `(stream, key, tick)`.
    pub fn generator(&self, stream: Stream, key: u32, tick: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((stream as u64) << 32) | key as u64);
        // 2^16 words per tick is far more than any single measurement needs.
        rng.set_word_pos((tick as u128) << 16);
        rng
    }

    /// `n` standard normal draws for one addressed block.
    pub fn normals(&self, stream: Stream, key: u32, tick: u64, n: usize) -> Vec<f64> {
        let mut rng = self.generator(stream, key, tick);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }
}

//! Reproducible Gaussian noise streams.
//!
//! Every stream is a ChaCha8 keystream addressed by `(seed, tag)` for the key
//! and `index` for the 64-bit stream id, so replication `k` of any Monte Carlo
//! loop draws the same numbers no matter which worker thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Address of a noise stream: master seed plus replication index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub index: u64,
}

impl StreamKey {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }
}

impl From<u64> for StreamKey {
    fn from(seed: u64) -> Self {
        Self { seed, index: 0 }
    }
}

/// Sub-stream tags. Distinct tags give statistically independent streams for
/// the same key.
pub mod tag {
    pub const DIFFUSION: u64 = 0;
    pub const SIGNAL: u64 = 1;
    pub const OBSERVATION: u64 = 2;
    pub const REFERENCE: u64 = 3;
}

pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(key: StreamKey, tag: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&key.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&tag.to_le_bytes());
        // constant tail so a zero seed does not give an all-zero key
        bytes[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(key.index);
        Self { rng }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normals(&mut v);
        v
    }
}

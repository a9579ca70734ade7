//! Reproducible random streams keyed by `(seed, stream_id)`.
//!
//! Each pair maps onto a distinct ChaCha8 stream, so work units can be
//! scheduled on any number of threads without changing their draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngSeed { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream identified by `tags`. The seed is kept and only the
    /// stream id changes, so children of distinct tag tuples never overlap.
    pub fn derive(&self, tags: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.stream_id ^ 0x6a09_e667_f3bc_c909);
        for &t in tags {
            h = splitmix64(h ^ splitmix64(t));
        }
        RngSeed {
            seed: self.seed,
            stream_id: h,
        }
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed::new(seed, 0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

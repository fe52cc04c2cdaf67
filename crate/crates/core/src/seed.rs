//! Splittable seed streams.
//!
//! Every random quantity is drawn from a stream addressed by a path of
//! integer tags from the experiment seed, so results do not depend on the
//! order in which workers consume them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedStream(u64);

// splitmix64 finaliser
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(mix(seed))
    }

    pub fn key(&self) -> u64 {
        self.0
    }

    /// Independent substream for `tag`.
    pub fn child(&self, tag: u64) -> Self {
        SeedStream(mix(self.0 ^ mix(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Fixed tags used to carve top-level substreams.
pub mod tags {
    pub const GRAPH: u64 = 1;
    pub const NODE_POTENTIALS: u64 = 2;
    pub const EDGE_POTENTIALS: u64 = 3;
    pub const SAMPLES: u64 = 4;
    pub const TRIALS: u64 = 5;
    pub const AUX: u64 = 6;
}

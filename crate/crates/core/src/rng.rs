//! Seeded, stream-addressable random number generation.
//!
//! Every random draw made by the mechanism goes through an [`RngStream`]. A
//! stream is identified by a `(seed, stream_id)` pair; the same pair always
//! yields the same draw sequence, and distinct stream ids under one seed are
//! independent ChaCha20 streams. Parallel workers each take their own stream
//! id so results never depend on scheduling.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream under the same seed whose id is a mix of this stream's
    /// id and `index`. Used to hand out per-worker or per-chunk streams.
    pub fn fork(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, derive_stream_id(self.stream_id, index))
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    /// Uniform draw on [0, 1).
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl std::fmt::Debug for RngStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream_id", &self.stream_id)
            .finish_non_exhaustive()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_stream_id(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.rotate_left(32))
}

//! Seeded random streams.
//!
//! Every run is driven by one 64-bit seed. Each consumer draws from its own
//! ChaCha8 stream: the key is derived from the seed and the stream id selects
//! an independent keystream, so consuming one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Named consumers of randomness within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Parameter initialization and k-means seeding.
    Init,
    Dropout,
    /// Label corruption.
    Noise,
    /// Train/test partitioning.
    Split,
    /// Mini-batch order.
    Shuffle,
    /// Synthetic dataset generation.
    Generate,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Dropout => 2,
            Stream::Noise => 3,
            Stream::Split => 4,
            Stream::Shuffle => 5,
            Stream::Generate => 6,
        }
    }
}

/// The generator for `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

//! Seeded ChaCha streams. Each purpose gets its own stream of the same seed so
//! that adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Parameters,
    ConstantFill,
    Splits,
    Init,
    Shuffle,
    Sweep,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Parameters => 1,
            Stream::ConstantFill => 2,
            Stream::Splits => 3,
            Stream::Init => 4,
            Stream::Shuffle => 5,
            Stream::Sweep => 6,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    indexed_rng(seed, stream, 0)
}

/// Independent generator for item `index` (an epoch, a grid cell) of a stream.
pub fn indexed_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream.tag() << 48) | index);
    rng
}

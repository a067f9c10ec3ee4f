//! Named random substreams.
//!
//! Every stochastic stage draws from its own ChaCha stream derived from the run
//! seed, so changing how many numbers one stage consumes never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Augment,
    Split,
    Probe,
    Theory,
    Sbm,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Augment => 2,
            Stream::Split => 3,
            Stream::Probe => 4,
            Stream::Theory => 5,
            Stream::Sbm => 6,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Generator for a raw seed, e.g. the per-view seeds recorded in augmented views.
pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Seeded randomness. One root seed fans out into independent ChaCha streams,
//! one per labelled consumer, so changing how much randomness one stage draws
//! never shifts another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Split,
    Prior,
    Gan,
    Eval,
    Init,
    Generate,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Split => 2,
            Stream::Prior => 3,
            Stream::Gan => 4,
            Stream::Eval => 5,
            Stream::Init => 6,
            Stream::Generate => 7,
        }
    }
}

/// Generator for one labelled stream under `seed`.
pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// A fresh child seed drawn from `rng`.
pub fn child_seed(rng: &mut ChaCha8Rng) -> u64 {
    rand::Rng::random(rng)
}

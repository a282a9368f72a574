//! Seeded, counter-based random streams.
//!
//! Every consumer of randomness (an encoder, a shuffler, an oracle decoder,
//! the bandit environment) draws from its own ChaCha stream, selected by a
//! `(seed, purpose, id)` triple. Streams never share state, so concurrent
//! batches and independent sweep cells stay reproducible regardless of the
//! order in which they run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// What a random stream is used for. Part of the stream selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Encode,
    Shuffle,
    Decode,
    Input,
    Context,
    Reward,
    Hard,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Encode => 1,
            Purpose::Shuffle => 2,
            Purpose::Decode => 3,
            Purpose::Input => 4,
            Purpose::Context => 5,
            Purpose::Reward => 6,
            Purpose::Hard => 7,
        }
    }
}

/// Opens the stream for `(seed, purpose, id)`.
///
/// The seed and purpose pick the key, the id picks the ChaCha stream, so two
/// mechanisms of the same run differ only in their stream counter.
pub fn stream(seed: u64, purpose: Purpose, id: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(purpose.tag()));
    let mut rng = ChaCha12Rng::seed_from_u64(key);
    rng.set_stream(id);
    rng
}

/// Derives a child seed, e.g. the seed of trial `index` within a sweep cell.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(0x9e37_79b9))))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

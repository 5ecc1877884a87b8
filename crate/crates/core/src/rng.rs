//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 (`rand_chacha`), a fully
//! specified generator whose output does not depend on platform or word size.
//! A seed plus a stream tag identifies every sequence, so independent
//! consumers never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed`, positioned on the stream identified by `tag`.
pub fn seeded(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

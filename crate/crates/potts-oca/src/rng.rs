//! Reproducible random-number streams.
//!
//! Every randomized routine in this crate takes a ChaCha8 generator.
//! The stream discipline is: a run has one master `seed`; independent
//! replicates (chains, repetitions, datasets) use `replicate_rng(seed,
//! r)`, which selects ChaCha stream `r` under the same key. Streams are
//! statistically independent, so replicate-level parallelism cannot
//! change any replicate's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for a whole run.
pub fn master_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for replicate `replicate` of the run seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

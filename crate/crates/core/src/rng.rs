//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by
//! `(seed, purpose, index)`, so results never depend on thread scheduling
//! or on the order in which independent work items are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when none is supplied.
pub const DEFAULT_SEED: u64 = 4_242_424_242;

/// Purpose tags that separate the stream namespaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Sample = 1,
    MonteCarlo = 2,
    Path = 3,
    Terminal = 4,
    Bridge = 5,
    Reference = 6,
    Projection = 7,
    Corpus = 8,
    Probe = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `index` of the given purpose.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Derive an independent child seed (used to give sub-experiments their own namespace).
pub fn child_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(label)))
}

//! Seeded random streams.
//!
//! Every unit of work (replicate, fold, resample, network) draws from its own
//! stream derived from `(seed, index)`, so results do not depend on the order
//! in which units are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(mix(seed) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stream(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, index))
}

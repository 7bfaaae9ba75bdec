//! Seeded randomness shared by every stochastic stage.
//!
//! All generators are ChaCha8 streams seeded from a `u64`, so results are
//! stable across platforms and `rand` point releases. Per-item seeds (one per
//! split, one per materialization) come from [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed for item `index` of a run seeded with `seed`.
///
/// The stream index is hashed separately before combining, so neighbouring
/// indices (and neighbouring parent seeds) yield unrelated children.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(seed ^ mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

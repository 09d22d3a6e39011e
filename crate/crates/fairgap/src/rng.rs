//! Deterministic seeding helpers shared by the generator and the harness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates consecutive seeds.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Hash a seed with a sequence of stream labels into a new seed.
///
/// Injective in practice over small label tuples; used for the harness
/// seed schedule `hash(base_seed, dataset_idx, trial, fold)`.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut acc = mix(base);
    for &l in labels {
        acc = mix(acc ^ mix(l));
    }
    acc
}

/// The toolkit's random stream: seeded ChaCha so results are identical
/// across platforms.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

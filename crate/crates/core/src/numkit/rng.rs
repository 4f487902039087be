use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere; ChaCha keeps streams stable across platforms.
pub type Rng64 = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(base, index)`; used for trials, members and streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(mix64(base) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_from(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

pub fn rng_for(base: u64, index: u64) -> Rng64 {
    Rng64::seed_from_u64(derive_seed(base, index))
}

//! Seeding. Every path owns a `Xoshiro256PlusPlus` stream seeded from a
//! SplitMix64 hash of its coordinates, so results do not depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type PathRng = Xoshiro256PlusPlus;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for the stream addressed by `coords` under `master`.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |h, &c| splitmix64(h ^ splitmix64(c.wrapping_add(0x6A09_E667))))
}

pub fn path_rng(seed: u64) -> PathRng {
    PathRng::seed_from_u64(seed)
}

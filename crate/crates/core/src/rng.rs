//! Counter-style RNG streams: one independent ChaCha stream per (seed, sample, tag).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer, used to decorrelate seed/counter pairs.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream addressed by `(master, sample, tag)`. The same triple always yields
/// the same sequence regardless of how many other streams were drawn.
pub fn stream(master: u64, sample: u64, tag: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(sample)));
    r.set_stream(tag);
    r
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// One standard normal draw.
pub fn normal(rng: &mut Rng) -> f64 {
    rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
}

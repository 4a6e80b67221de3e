//! Small crate-internal helpers.

/// splitmix64 finalizer; decorrelates related seeds.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    z
}

/// Mix a base seed with up to three stream identifiers into one RNG seed.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = splitmix64(seed);
    z = splitmix64(z ^ a.wrapping_mul(0xd1342543de82ef95));
    z = splitmix64(z ^ b.wrapping_mul(0xaf251af3b0f025b5));
    splitmix64(z ^ c.wrapping_mul(0x9e3779b97f4a7c15))
    }

/// Deterministic uniform in [0, 1) from a mixed seed.
pub(crate) fn hash01(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    (mix_seed(seed, a, b, c) >> 11) as f64 / (1u64 << 53) as f64
}

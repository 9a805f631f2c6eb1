//! Seed derivation and counter-based noise.
//!
//! All randomness in a run flows from one master seed. Each consumer derives
//! its own stream seed by folding a tag (and optionally a few indices) into
//! the master seed, so adding or removing one consumer never shifts the
//! stream seen by another.
//!
//! Synthetic data and augmentation noise are generated *counter-based*: the
//! value is a pure function of a key, not of how many draws came before it.
//! That keeps generated datasets and noise stable under reordering and
//! independent of any RNG crate's internal stream layout.

/// SplitMix64 finalizer. Full-avalanche mix of a 64-bit value.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold `v` into a running seed.
pub fn mix(seed: u64, v: u64) -> u64 {
    splitmix64(seed ^ v.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Derive the seed of a named stream: `master` + a tag + one index.
///
/// Distinct tags give unrelated streams; the index separates instances of
/// the same kind of stream (one per search, per trial, ...).
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(master.wrapping_add(0x6a09_e667_f3bc_c909));
    for b in tag.as_bytes() {
        h = mix(h, u64::from(*b));
    }
    mix(h, index)
}

/// Uniform draw in `[0, 1)` keyed by `key`.
pub fn unit_uniform(key: u64) -> f64 {
    // 53 top bits -> [0, 2^53), scaled into [0, 1).
    (splitmix64(key) >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard-normal draw keyed by `key` (Box-Muller over two mixed values).
pub fn unit_normal(key: u64) -> f64 {
    let a = splitmix64(key);
    let b = splitmix64(a ^ 0xd1b5_4a32_d192_ed03);
    // u1 in (0, 1] so the log stays finite; u2 in [0, 1).
    let u1 = ((a >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0);
    let u2 = (b >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

//! Per-cell seed derivation.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output step applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one benchmark cell. Depends only on its coordinates, so the
/// order in which cells run cannot change any result.
pub fn mix64(master: u64, trial: u64, case: u64, generation: u64) -> u64 {
    [trial, case, generation]
        .into_iter()
        .fold(splitmix64(master), |h, x| splitmix64(h ^ x))
}

//! Deterministic seed derivation for the seeded operations.
//!
//! Every stochastic step (noise init, patch subsampling, filter banks,
//! categorical sampling) derives its own stream from the user seed plus a
//! handful of context words, so runs are bit-reproducible and independent
//! steps never share a stream.

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix the user seed with context words into one derived seed.
pub(crate) fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(seed);
    for &p in parts {
        acc = splitmix64(acc ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    acc
}

/// Hash-indexed uniform in (0, 1); order-independent by construction.
pub(crate) fn indexed_unit(seed: u64, i: u64, j: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(i.wrapping_mul(0xd134_2543_de82_ef95) ^ j));
    // 53 high bits -> (0, 1); +1 avoids an exact zero.
    (((h >> 11) + 1) as f64) / ((1u64 << 53) as f64 + 2.0)
}

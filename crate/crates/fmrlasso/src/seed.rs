//! Deterministic sub-seed derivation.
//!
//! All randomness in the crate flows from a single master seed; per-run,
//! per-fold and per-start seeds are derived with splitmix64 so results are
//! reproducible across platforms and library versions.

/// Derives a child seed from `master` and a stream index.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

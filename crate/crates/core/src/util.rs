//! Small shared helpers.

/// FNV-1a 64-bit hash. Used to derive per-key sub-seeds from the run seed so
/// that derived randomness is stable across platforms and releases.
pub fn fnv1a64(data: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in data.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives a deterministic sub-seed from a base seed and a string scope.
pub fn subseed(base: u64, scope: &str) -> u64 {
    base ^ fnv1a64(scope)
}

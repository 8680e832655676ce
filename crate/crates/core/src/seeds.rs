//! Stable seed derivation.
//!
//! All randomness in a run flows from one master seed. Sub-streams (chain
//! proposals, subsample draws, partition shuffles, synthetic covariates) use
//! seeds derived as a stable hash of `(master, role, index)` so that adding a
//! consumer never perturbs existing streams and results are reproducible
//! across platforms and releases.

/// SplitMix64 finalizer; full-period mixing of a 64-bit word.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over the role name, so distinct roles land in distinct streams.
fn hash_role(role: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in role.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive the seed for sub-stream `(role, index)` of `master`.
pub fn derive_seed(master: u64, role: &str, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(hash_role(role) ^ splitmix64(index)))
}

//! Deterministic random number streams.
//!
//! Every randomized routine in this crate takes a `u64` seed and builds its
//! generator with [`rng_from_seed`], or derives a sub-seed with
//! [`derive_seed`] first. Sub-seeds are mixed from a master seed and a tag
//! path (for example `[cell, replicate]`), which makes parallel Monte Carlo
//! runs reproducible independently of scheduling: replicate 17 of cell 3
//! always sees the same stream no matter which thread runs it or in which
//! order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The pseudorandom generator used throughout the crate.
pub type Rng = ChaCha12Rng;

/// SplitMix64 step; the standard finalizer with full-period increment.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed and a tag path into a single sub-seed.
///
/// Distinct paths give statistically independent sub-seeds; an empty path
/// returns a mix of the master seed alone.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &tag in path {
        state ^= tag.wrapping_mul(0xA24B_AED4_963E_E407);
        out ^= splitmix64(&mut state);
    }
    out
}

/// Builds the crate's generator from a bare seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Builds a generator for `path` under `master`; see [`derive_seed`].
pub fn derive_rng(master: u64, path: &[u64]) -> Rng {
    rng_from_seed(derive_seed(master, path))
}

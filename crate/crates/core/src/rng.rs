//! Deterministic per-trial random streams.
//!
//! Every trial gets its own generator seeded from `(master_seed, index)`,
//! so datasets do not depend on how trials are scheduled across threads.

use rand_pcg::Pcg64Mcg;

pub type TrialRng = Pcg64Mcg;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator for trial `index` of a run seeded with `master_seed`.
pub fn trial_rng(master_seed: u64, index: u64) -> TrialRng {
    let hi = splitmix64(master_seed ^ splitmix64(index));
    let lo = splitmix64(hi ^ index.rotate_left(17));
    Pcg64Mcg::new(((hi as u128) << 64) | lo as u128 | 1)
}

//! Seed derivation and per-path random streams.
//!
//! Every Monte Carlo path `i` under a master seed `s` draws from its own
//! ChaCha8 stream seeded with `splitmix64(s ^ i)`. Results therefore do not
//! depend on how paths are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of path `index` under `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index)
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `f(index, path_seed)` for every path in parallel and returns the
/// results in path-index order.
pub fn map_paths<T, F>(n_paths: usize, master: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| f(i, path_seed(master, i as u64)))
        .collect()
}

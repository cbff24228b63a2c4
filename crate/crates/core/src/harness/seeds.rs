//! Seed splitting. Every random stream in an experiment is derived from the
//! base seed plus a path of labels, so one stream never depends on how many
//! draws another made or in which order cells run.

use crate::embed::fnv1a64;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `derive_seed(base, [a, b, ...]) = mix(...mix(mix(base) ^ a) ^ b ...)`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |h, &p| mix64(h ^ p))
}

/// Stable numeric label for a string component.
pub fn label(s: &str) -> u64 {
    fnv1a64(s.as_bytes())
}

/// `trial_seed = derive_seed(base, [grid, label(strategy), trial])`.
pub fn trial_seed(base: u64, grid: usize, strategy: &str, trial: usize) -> u64 {
    derive_seed(base, &[grid as u64, label(strategy), trial as u64])
}

/// Seed for training base task `task_id` on an `grid`×`grid` board.
pub fn base_seed(base: u64, grid: usize, task_id: &str) -> u64 {
    derive_seed(base, &[grid as u64, label("base"), label(task_id)])
}

pub fn align_seed(base: u64, grid: usize) -> u64 {
    derive_seed(base, &[grid as u64, label("align")])
}

/// Seed for the random weights of a from-scratch target policy.
pub fn scratch_init_seed(base: u64, grid: usize, trial: usize) -> u64 {
    derive_seed(base, &[grid as u64, label("scratch-init"), trial as u64])
}

//! Random case generators and brute-force reference implementations.
//!
//! Every checker returns `Err(description)` on the first disagreement so the
//! same code can back both proptest properties and the acceptance runner.

#![allow(dead_code)]

pub mod annotate;
pub mod calib;
pub mod join;
pub mod locking;
pub mod machine;
pub mod vote;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Whitespace collapsed and trimmed, written without the crate's helper.
pub fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs `check` on `cases` seeds derived from `base` and returns the failures.
pub fn run_cases(base: u64, cases: u64, check: impl Fn(u64) -> Result<(), String>) -> Vec<String> {
    (0..cases)
        .filter_map(|i| {
            let seed = base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
            check(seed).err().map(|e| format!("seed {seed}: {e}"))
        })
        .collect()
}

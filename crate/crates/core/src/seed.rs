//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a base
//! seed mixed with a path of integers (slice, epoch, chunk, ...).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}

// Stream tags keep unrelated consumers of the same base seed apart.
pub(crate) const SHUFFLE: u64 = 1;
pub(crate) const NEGATIVES: u64 = 2;
pub(crate) const INIT: u64 = 3;
pub(crate) const REPARAM: u64 = 4;
pub(crate) const SPLIT: u64 = 5;
pub(crate) const SUBSAMPLE: u64 = 6;
pub(crate) const SYNTH: u64 = 7;
pub(crate) const OOV: u64 = 8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_distinct() {
        assert_ne!(derive(1, &[0, 1]), derive(1, &[1, 0]));
        assert_ne!(derive(1, &[]), derive(2, &[]));
        assert_eq!(derive(9, &[3, 4]), derive(9, &[3, 4]));
    }
}

//! Seed handling.
//!
//! Every Monte Carlo replica gets its own ChaCha8 stream: the master seed
//! fixes the key and the replica index selects the stream, so replicas are
//! independent and a replica can be regenerated in isolation.
//!
//! The dual processes additionally need random numbers addressed by
//! `(label, event counter)` so that two different processes driven by the
//! same labels see the same numbers. [`BlockSource`] provides that by seeking
//! the ChaCha keystream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Seed for replica `r` of an engine that takes a plain `u64` seed; a
/// splitmix64 step keeps neighbouring replicas unrelated.
pub fn replica_seed(seed: u64, r: u64) -> u64 {
    let mut z = seed ^ r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_closed_open(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in the open interval `(0, 1)`.
#[inline]
pub fn unit_open(w: u64) -> f64 {
    ((w >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Exponential with the given rate.
#[inline]
pub fn exponential(w: u64, rate: f64) -> f64 {
    -unit_open(w).ln() / rate
}

/// Counter-addressed random blocks.
#[derive(Clone)]
pub struct BlockSource {
    base: ChaCha8Rng,
}

impl BlockSource {
    pub fn new(seed: u64) -> Self {
        BlockSource { base: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Eight words tied to `(stream, counter)`.
    pub fn block(&self, stream: u64, counter: u64) -> [u64; 8] {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(counter) * 16);
        let mut out = [0u64; 8];
        for w in &mut out {
            *w = rng.next_u64();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_addressable() {
        let src = BlockSource::new(7);
        let a = src.block(3, 5);
        let b = src.block(3, 5);
        assert_eq!(a, b);
        assert_ne!(a, src.block(3, 6));
        assert_ne!(a, src.block(4, 5));
        let mut seq = src.base.clone();
        seq.set_stream(3);
        let mut direct = [0u64; 16];
        for w in &mut direct {
            *w = seq.next_u64();
        }
        assert_eq!(src.block(3, 1), direct[8..16]);
    }

    #[test]
    fn unit_ranges() {
        assert_eq!(unit_closed_open(0), 0.0);
        assert!(unit_closed_open(u64::MAX) < 1.0);
        assert!(unit_open(0) > 0.0);
        assert!(unit_open(u64::MAX) < 1.0);
        assert!(exponential(u64::MAX, 1.0) > 0.0);
    }

    #[test]
    fn replicas_differ() {
        let mut a = replica_rng(1, 0);
        let mut b = replica_rng(1, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}

//! Seedable, splittable random streams.
//!
//! Every stream is a ChaCha8 generator. Child streams get their own key,
//! derived from the parent seed and the child index through SplitMix64,
//! and a distinct ChaCha stream id, so batch `i` of a simulation always sees
//! the same numbers regardless of how batches are scheduled.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream number `index`. Depends only on this stream's seed
    /// and `index`, never on how much of the parent has been consumed.
    pub fn child(&self, index: u64) -> SeededRng {
        let seed = splitmix64(self.seed ^ splitmix64(index.wrapping_add(1)));
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index.wrapping_add(1));
        SeededRng { seed, inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn children_are_independent_of_parent_position() {
        let parent = SeededRng::new(7);
        let mut advanced = parent.clone();
        for _ in 0..17 {
            advanced.next_u64();
        }
        let mut c1 = parent.child(3);
        let mut c2 = advanced.child(3);
        assert_eq!(c1.next_u64(), c2.next_u64());
        let mut other = parent.child(4);
        assert_ne!(parent.child(3).next_u64(), other.next_u64());
    }

    #[test]
    fn uniform_open_stays_inside() {
        let mut r = SeededRng::new(1);
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let u = r.uniform_open();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.005);
    }
}

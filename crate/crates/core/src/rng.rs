//! Seeded, platform-independent randomness.
//!
//! Every random draw in the toolkit goes through [`SeededRng`], which wraps
//! the ChaCha8 stream cipher generator (`rand_chacha::ChaCha8Rng`). ChaCha8 is
//! counter based and its output for a given 256-bit key is fixed by the
//! algorithm, so identical seeds yield identical sequences on every
//! platform. The 64-bit seed is expanded to a key with `seed_from_u64`.
//!
//! Sampling helpers (uniform floats, bounded integers, Gaussians) are coded
//! here rather than taken from a distribution library so that their exact
//! arithmetic is pinned as well.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
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
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `(self.seed, stream_id)`.
    ///
    /// Depends only on the parent's seed, not on how many values the parent
    /// has already produced, and leaves the parent untouched.
    pub fn derive(&self, stream_id: u64) -> SeededRng {
        let child = splitmix64(splitmix64(self.seed) ^ splitmix64(stream_id.wrapping_mul(SPLITMIX_GAMMA) ^ 0x5eed));
        SeededRng::new(child)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]`; returns `lo` exactly when the interval is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.uniform();
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }

    /// Uniform integer in `[0, n)` by rejection, so there is no modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi);
        lo + self.below(hi - lo + 1)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller (one draw per call, the sine branch is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Free-function form of [`SeededRng::derive`].
pub fn derive_rng(parent: &SeededRng, stream_id: u64) -> SeededRng {
    parent.derive(stream_id)
}

//! Portable, seeded random streams.
//!
//! Every stream is xoshiro256++ seeded from a `u64` through SplitMix64 (the
//! reference seeding of the xoshiro authors), then advanced by
//! `stream` jumps of 2^128 steps so that different purposes never share
//! draws. All derived quantities use integer arithmetic or documented
//! transforms so that other implementations can reproduce them:
//!
//! * uniform `f64` in `[0, 1)`: `(next_u64 >> 11) * 2^-53`;
//! * integer below `n`: Lemire's multiply-shift with rejection;
//! * standard normal: Box–Muller cosine branch, `u1 = 1 − uniform()`,
//!   `u2 = uniform()`, one normal per two uniforms;
//! * sampling without replacement: partial Fisher–Yates over `0..n`, swapping
//!   position `i` with `i + below(n − i)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Purpose-specific stream selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Synthetic = 0,
    Mask = 1,
    Holdout = 2,
}

#[derive(Clone, Debug)]
pub struct PortableRng(Xoshiro256PlusPlus);

impl PortableRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..stream as usize {
            rng.jump();
        }
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// `k` distinct values from `0..n`, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

//! Seeded normal draws for the instance generators.
//!
//! The stream is fully specified so other implementations can reproduce
//! generated plants:
//!
//! 1. The 64-bit seed is expanded with `rand_core::SeedableRng::seed_from_u64`
//!    (PCG32 key expansion) into a ChaCha20 key.
//! 2. A uniform in `[0, 1)` is `(next_u64() >> 11) * 2^-53`.
//! 3. Each standard normal consumes two uniforms `u1, u2` and returns
//!    `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` (Box-Muller, cosine branch only).

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic source of standard normal variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha20Rng,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform variate in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

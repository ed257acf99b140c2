//! Seeded random streams and complex Gaussian noise.
//!
//! Every random draw in the crate goes through [`RngStream`], a ChaCha8
//! counter-mode generator keyed by `(seed, stream id)`. Stream ids are
//! derived from an experiment label and a trial index, so trials can run in
//! any order or in parallel without changing their numbers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream labels used by the experiments. Values are arbitrary but fixed.
pub mod label {
    pub const PLACEMENT: u64 = 0x01;
    pub const NOISE: u64 = 0x02;
    pub const PILOTS: u64 = 0x03;
    pub const SUMRATE_DRAW: u64 = 0x10;
    pub const MUSIC_TRIAL: u64 = 0x20;
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Stream `index` of family `label` under `seed`.
    pub fn new(seed: u64, label: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        // label in the high 16 bits, trial index below
        inner.set_stream((label << 48) ^ index);
        Self { inner }
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    fn uniform_open_low(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Lemire's multiply-shift; bias is below 2^-64 * n
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Circularly-symmetric complex Gaussian with unit variance
    /// (`E|z|^2 = 1`), via the Box-Muller transform.
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        Complex64::from_polar((-u1.ln()).sqrt(), 2.0 * PI * u2)
    }

    /// Unit-power QPSK symbol `(+-1 +- j) / sqrt(2)`.
    pub fn qpsk(&mut self) -> Complex64 {
        let bits = self.inner.next_u32();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let re = if bits & 1 == 0 { s } else { -s };
        let im = if bits & 2 == 0 { s } else { -s };
        Complex64::new(re, im)
    }
}

/// `len` i.i.d. unit-variance circularly-symmetric complex Gaussian samples
/// from stream `(seed, label, index)`.
pub fn awgn(seed: u64, label: u64, index: u64, len: usize) -> Vec<Complex64> {
    let mut rng = RngStream::new(seed, label, index);
    (0..len).map(|_| rng.complex_gaussian()).collect()
}

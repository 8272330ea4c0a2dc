//! Deterministic random data and independent oracles for unit tests.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng as _, SeedableRng};

use crate::field::ScalarField;
use crate::grid::Grid;

/// Seeded RNG with a uniform f64 helper; all unit tests draw from this so
/// results are reproducible.
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn seed(s: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(s))
    }

    /// Uniform in `[-1, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// Pointwise-random field (no smoothness), for transform and quadrature
/// checks.
pub fn rng_field(grid: Grid, rng: &mut Rng) -> ScalarField {
    let mut f = ScalarField::zeros(grid);
    for v in f.values_mut() {
        *v = rng.uniform();
    }
    f
}

/// Direct O(N^2) discrete Fourier sum with the library's normalization,
/// independent of the FFT implementation.
pub fn dft_oracle(f: &ScalarField) -> Vec<Complex64> {
    let g = f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = vec![Complex64::ZERO; nx * ny];
    let tau = 2.0 * std::f64::consts::PI;
    for q in 0..ny {
        for p in 0..nx {
            let mut acc = Complex64::ZERO;
            for j in 0..ny {
                for i in 0..nx {
                    let phase = -tau * (p as f64 * i as f64 / nx as f64
                        + q as f64 * j as f64 / ny as f64);
                    acc += f.values()[j * nx + i] * Complex64::new(phase.cos(), phase.sin());
                }
            }
            out[q * nx + p] = acc / (nx * ny) as f64;
        }
    }
    out
}

//! Built-in initial conditions: smoothed indicators, classical steady flows,
//! and seeded band-limited random fields.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::helmholtz::EPS_DENSITY;
use crate::spectral::{self, SpectralField};

/// Periodic signed distance along one axis: positive inside the band of
/// half-width `w` centered at `c`.
fn band_signed_distance(x: f64, c: f64, w: f64, l: f64) -> f64 {
    let mut d = (x - c).rem_euclid(l);
    if d > l / 2.0 {
        d -= l;
    }
    w - d.abs()
}

fn smoothed_indicator(sd: f64, delta: f64) -> f64 {
    0.5 * (1.0 + (sd / delta).tanh())
}

/// Smoothed indicator band of half the domain width, affinely mapped into
/// `[EPS_DENSITY, 1]` so densities stay bounded away from zero. The smoothing
/// width is four grid cells. `shift` translates the band along x.
pub fn stripe(grid: Grid, shift: f64) -> ScalarField {
    let delta = 4.0 * grid.dx();
    let c = grid.lx() / 2.0 + shift;
    let w = grid.lx() / 4.0;
    ScalarField::from_fn(grid, |x, _| {
        let chi = smoothed_indicator(band_signed_distance(x, c, w, grid.lx()), delta);
        EPS_DENSITY + (1.0 - EPS_DENSITY) * chi
    })
}

/// Smoothed indicator disk of radius a quarter of the domain, centered.
pub fn disk(grid: Grid) -> ScalarField {
    let delta = 4.0 * grid.dx().max(grid.dy());
    let (cx, cy) = (grid.lx() / 2.0, grid.ly() / 2.0);
    let r0 = grid.lx().min(grid.ly()) / 4.0;
    ScalarField::from_fn(grid, |x, y| {
        let mut dx = (x - cx).rem_euclid(grid.lx());
        if dx > grid.lx() / 2.0 {
            dx -= grid.lx();
        }
        let mut dy = (y - cy).rem_euclid(grid.ly());
        if dy > grid.ly() / 2.0 {
            dy -= grid.ly();
        }
        let sd = r0 - (dx * dx + dy * dy).sqrt();
        EPS_DENSITY + (1.0 - EPS_DENSITY) * smoothed_indicator(sd, delta)
    })
}

/// Uniform density with the same mass as `of` (the perfectly mixed state).
pub fn uniform_matching_mass(of: &ScalarField) -> ScalarField {
    ScalarField::constant(*of.grid(), of.mass() / of.grid().total_measure())
}

/// Steady cellular flow `(sin x cos y, -cos x sin y)` scaled by `amplitude`.
pub fn taylor_green(grid: Grid, amplitude: f64) -> VectorField {
    VectorField::from_fn(grid, |x, y| {
        (amplitude * x.sin() * y.cos(), -amplitude * x.cos() * y.sin())
    })
}

/// Parallel shear flow `(sin y, 0)` scaled by `amplitude`.
pub fn shear(grid: Grid, amplitude: f64) -> VectorField {
    VectorField::from_fn(grid, |_, y| (amplitude * y.sin(), 0.0))
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Zero-mean random field band-limited to `max(|kx|, |ky|) <= kmax`, with a
/// `1/(1+|k|^2)` amplitude profile and unit peak amplitude. Deterministic for
/// a fixed seed.
pub fn random_band_limited(grid: Grid, seed: u64, kmax: usize) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = kmax.min(grid.nx() / 2 - 1).min(grid.ny() / 2 - 1) as i64;
    let mut hat = SpectralField::zeros(grid);
    let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
    for ky in -kmax..=kmax {
        for kx in -kmax..=kmax {
            if kx == 0 && ky == 0 {
                continue;
            }
            // Fill each conjugate pair once, from its canonical member.
            if ky < 0 || (ky == 0 && kx < 0) {
                continue;
            }
            let profile = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            let c = Complex64::new(uniform(&mut rng), uniform(&mut rng)) * profile;
            let idx = |kx: i64, ky: i64| {
                (ky.rem_euclid(ny) * nx + kx.rem_euclid(nx)) as usize
            };
            hat.coeffs_mut()[idx(kx, ky)] = c;
            hat.coeffs_mut()[idx(-kx, -ky)] = c.conj();
        }
    }
    let mut f = spectral::inverse_transform(&hat);
    let peak = f.linf_norm();
    if peak > 0.0 {
        f.scale(1.0 / peak);
    }
    f
}

/// Strictly positive random density: `1 + 0.4 * band-limited noise`, so the
/// minimum stays well above `EPS_DENSITY`.
pub fn random_density(grid: Grid, seed: u64, kmax: usize) -> ScalarField {
    let mut f = random_band_limited(grid, seed, kmax);
    f.scale(0.4);
    f.shift(1.0);
    f
}

/// Divergence-free random velocity (a perpendicular-gradient of band-limited
/// noise) scaled to the requested maximum speed.
pub fn random_velocity(grid: Grid, seed: u64, kmax: usize, max_speed: f64) -> VectorField {
    let psi = random_band_limited(grid, seed, kmax);
    let mut v = spectral::perp_gradient(&psi);
    let peak = v.max_speed();
    if peak > 0.0 {
        v.scale(max_speed / peak);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stripe_is_positive_and_smoothly_banded() {
        let g = Grid::square(64).unwrap();
        let s = stripe(g, 0.0);
        assert!(s.min_value() >= EPS_DENSITY * 0.999);
        assert!(s.max_value() <= 1.0 + 1e-12);
        // Roughly half the mass of the all-ones field.
        let frac = s.mass() / g.total_measure();
        assert!((frac - 0.5).abs() < 0.05, "stripe mass fraction {frac}");
    }

    #[test]
    fn stripe_shift_translates_samples() {
        let g = Grid::square(32).unwrap();
        let a = stripe(g, 0.0);
        let b = stripe(g, 4.0 * g.dx());
        // Grid-aligned shift: values are a cyclic rearrangement.
        for j in 0..32 {
            for i in 0..32 {
                let ii = (i + 4) % 32;
                assert!((b.at(ii, j) - a.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_fields_are_deterministic_and_zero_mean() {
        let g = Grid::square(32).unwrap();
        let a = random_band_limited(g, 9, 6);
        let b = random_band_limited(g, 9, 6);
        assert_eq!(a.values(), b.values());
        assert!(a.mean().abs() < 1e-13);
        let v = random_velocity(g, 5, 6, 0.7);
        assert!((v.max_speed() - 0.7).abs() < 1e-12);
        assert!(spectral::divergence(&v).linf_norm() < 1e-12);
    }
}

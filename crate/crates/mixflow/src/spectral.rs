//! Fourier transforms and spectral differential operators.
//!
//! Fields live on the periodic grid, so every derivative is computed exactly
//! (for resolved modes) by multiplication in Fourier space. The forward
//! transform is normalized by `1/(nx*ny)`: the coefficient at `k = 0` equals
//! the field mean, mass conservation and solvability conditions read directly
//! off the spectrum.
//!
//! Wavevectors are integer pairs `k = (kx, ky)` with `kx in [-nx/2, nx/2)`,
//! `ky in [-ny/2, ny/2)`, stored in FFT order. The physical wavevector is
//! `kappa = (2*pi*kx/lx, 2*pi*ky/ly)`. Odd-order derivative multipliers zero
//! the Nyquist mode so that derivatives of real fields stay real and the
//! discrete integration-by-parts identity is exact.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Complex Fourier coefficients of a real field. Conjugate symmetry is an
/// invariant maintained by every operation here; the imaginary residue after
/// an inverse transform is discarded.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::ZERO; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Signed integer wavenumber along x for storage index `p`.
    pub fn kx_int(&self, p: usize) -> i64 {
        signed_mode(p, self.grid.nx())
    }

    pub fn ky_int(&self, q: usize) -> i64 {
        signed_mode(q, self.grid.ny())
    }

    /// Coefficient at integer wavevector `(kx, ky)`.
    pub fn coeff_at(&self, kx: i64, ky: i64) -> Complex64 {
        let nx = self.grid.nx() as i64;
        let ny = self.grid.ny() as i64;
        let p = kx.rem_euclid(nx) as usize;
        let q = ky.rem_euclid(ny) as usize;
        self.coeffs[q * self.grid.nx() + p]
    }

    /// Apply a real per-mode factor in place.
    pub fn apply_factors(&mut self, f: impl Fn(f64, f64) -> f64) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (lx, ly) = (self.grid.lx(), self.grid.ly());
        for q in 0..ny {
            let ky = physical_wavenumber(q, ny, ly);
            for p in 0..nx {
                let kx = physical_wavenumber(p, nx, lx);
                self.coeffs[q * nx + p] *= f(kx, ky);
            }
        }
    }

    /// Sum of squared coefficient magnitudes (used by Parseval-style checks
    /// and spectral norms).
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn signed_mode(p: usize, n: usize) -> i64 {
    if p < n / 2 {
        p as i64
    } else {
        p as i64 - n as i64
    }
}

/// Physical wavenumber `2*pi*k/l` for storage index `p` (Nyquist kept
/// negative).
fn physical_wavenumber(p: usize, n: usize, l: f64) -> f64 {
    2.0 * std::f64::consts::PI * signed_mode(p, n) as f64 / l
}

/// Like `physical_wavenumber` but with the Nyquist mode zeroed; used for
/// first-derivative multipliers.
fn deriv_wavenumber(p: usize, n: usize, l: f64) -> f64 {
    if p == n / 2 {
        0.0
    } else {
        physical_wavenumber(p, n, l)
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

fn fft2d(grid: &Grid, data: &mut Vec<Complex64>, inverse: bool) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let fx = plan(nx, inverse);
    for row in data.chunks_exact_mut(nx) {
        fx.process(row);
    }
    let mut scratch = vec![Complex64::ZERO; nx * ny];
    transpose(data, ny, nx, &mut scratch);
    let fy = plan(ny, inverse);
    for col in scratch.chunks_exact_mut(ny) {
        fy.process(col);
    }
    transpose(&scratch, nx, ny, data);
}

/// Forward transform, normalized so the `k = 0` coefficient is the mean.
pub fn transform(f: &ScalarField) -> SpectralField {
    let grid = *f.grid();
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2d(&grid, &mut data, false);
    let scale = 1.0 / grid.len() as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
    SpectralField { grid, coeffs: data }
}

/// Inverse transform back to grid samples.
pub fn inverse_transform(f: &SpectralField) -> ScalarField {
    let mut data = f.coeffs.clone();
    fft2d(&f.grid, &mut data, true);
    let mut out = ScalarField::zeros(f.grid);
    for (o, c) in out.values_mut().iter_mut().zip(&data) {
        *o = c.re;
    }
    out
}

/// Per-mode real factors for the self-adjoint operators used as effort
/// weights: identity, `-Laplacian`, `Laplacian^2`, `I - Laplacian`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierKind {
    Identity,
    NegLaplacian,
    Bilaplacian,
    OnePlusNegLaplacian,
}

impl MultiplierKind {
    /// Factor as a function of `|kappa|^2`.
    pub fn factor(&self, k2: f64) -> f64 {
        match self {
            MultiplierKind::Identity => 1.0,
            MultiplierKind::NegLaplacian => k2,
            MultiplierKind::Bilaplacian => k2 * k2,
            MultiplierKind::OnePlusNegLaplacian => 1.0 + k2,
        }
    }

    /// Inverse factor on mean-zero fields; modes in the kernel map to zero.
    pub fn inverse_factor(&self, k2: f64) -> f64 {
        let f = self.factor(k2);
        if f == 0.0 {
            0.0
        } else {
            1.0 / f
        }
    }
}

/// Apply a multiplier to a scalar field, spectrally.
pub fn apply_multiplier(f: &ScalarField, kind: MultiplierKind) -> ScalarField {
    let mut hat = transform(f);
    hat.apply_factors(|kx, ky| kind.factor(kx * kx + ky * ky));
    inverse_transform(&hat)
}

pub fn apply_multiplier_vec(v: &VectorField, kind: MultiplierKind) -> VectorField {
    VectorField::from_components(
        apply_multiplier(v.x(), kind),
        apply_multiplier(v.y(), kind),
    )
    .expect("components share a grid")
}

fn derivative(hat: &SpectralField, axis: usize) -> SpectralField {
    let grid = hat.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = hat.clone();
    for q in 0..ny {
        let ky = deriv_wavenumber(q, ny, grid.ly());
        for p in 0..nx {
            let kx = deriv_wavenumber(p, nx, grid.lx());
            let k = if axis == 0 { kx } else { ky };
            out.coeffs[q * nx + p] *= Complex64::new(0.0, k);
        }
    }
    out
}

/// `df/dx` computed spectrally.
pub fn deriv_x(f: &ScalarField) -> ScalarField {
    inverse_transform(&derivative(&transform(f), 0))
}

pub fn deriv_y(f: &ScalarField) -> ScalarField {
    inverse_transform(&derivative(&transform(f), 1))
}

/// `grad f = (df/dx, df/dy)`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let hat = transform(f);
    VectorField::from_components(
        inverse_transform(&derivative(&hat, 0)),
        inverse_transform(&derivative(&hat, 1)),
    )
    .expect("components share a grid")
}

/// `div v = dvx/dx + dvy/dy`.
pub fn divergence(v: &VectorField) -> ScalarField {
    let mut dx = derivative(&transform(v.x()), 0);
    let dy = derivative(&transform(v.y()), 1);
    for (a, b) in dx.coeffs.iter_mut().zip(&dy.coeffs) {
        *a += b;
    }
    inverse_transform(&dx)
}

/// Scalar curl `dvy/dx - dvx/dy` (the 2D vorticity of `v`).
pub fn scalar_curl(v: &VectorField) -> ScalarField {
    let mut cy = derivative(&transform(v.y()), 0);
    let cx = derivative(&transform(v.x()), 1);
    for (a, b) in cy.coeffs.iter_mut().zip(&cx.coeffs) {
        *a -= b;
    }
    inverse_transform(&cy)
}

/// Perpendicular gradient `(-df/dy, df/dx)`; divergence-free for any `f`.
pub fn perp_gradient(f: &ScalarField) -> VectorField {
    let hat = transform(f);
    let mut mx = derivative(&hat, 1);
    for c in mx.coeffs.iter_mut() {
        *c = -*c;
    }
    VectorField::from_components(inverse_transform(&mx), inverse_transform(&derivative(&hat, 0)))
        .expect("components share a grid")
}

/// Solve `Laplacian u = f` for the zero-mean `u`; the mean of `f` is ignored
/// (it lies outside the operator range on the torus).
pub fn laplacian_inverse(f: &ScalarField) -> ScalarField {
    let mut hat = transform(f);
    hat.apply_factors(|kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            0.0
        } else {
            -1.0 / k2
        }
    });
    inverse_transform(&hat)
}

fn dealias_keep(k: i64, n: usize) -> bool {
    3 * k.unsigned_abs() as usize <= n
}

/// 2/3-rule low-pass: zero every mode with `|kx| > nx/3` or `|ky| > ny/3`.
/// Applied to the inputs and the output of quadratic products so the retained
/// modes are alias-free.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut hat = transform(f);
    dealias_spectral(&mut hat);
    inverse_transform(&hat)
}

pub fn dealias_spectral(hat: &mut SpectralField) {
    let (nx, ny) = (hat.grid.nx(), hat.grid.ny());
    for q in 0..ny {
        let keep_y = dealias_keep(signed_mode(q, ny), ny);
        for p in 0..nx {
            if !(keep_y && dealias_keep(signed_mode(p, nx), nx)) {
                hat.coeffs[q * nx + p] = Complex64::ZERO;
            }
        }
    }
}

pub fn dealias_vec(v: &VectorField) -> VectorField {
    VectorField::from_components(dealias(v.x()), dealias(v.y())).expect("components share a grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{dft_oracle, rng_field, Rng};

    #[test]
    fn constant_field_transforms_to_mean_only() {
        let g = Grid::square(16).unwrap();
        let f = ScalarField::constant(g, 5.0);
        let hat = transform(&f);
        assert!((hat.coeff_at(0, 0) - Complex64::new(5.0, 0.0)).norm() < 1e-14);
        let other: f64 = hat
            .coeffs()
            .iter()
            .skip(1)
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(other < 1e-14, "nonzero coefficient off k=0: {other}");
    }

    #[test]
    fn cosine_has_half_amplitude_lines() {
        let g = Grid::square(16).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x.cos());
        let hat = transform(&f);
        assert!((hat.coeff_at(1, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!((hat.coeff_at(-1, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        let mut residue = 0.0f64;
        for q in 0..16 {
            for p in 0..16 {
                let (kx, ky) = (hat.kx_int(p), hat.ky_int(q));
                if !(ky == 0 && (kx == 1 || kx == -1)) {
                    residue = residue.max(hat.coeff_at(kx, ky).norm());
                }
            }
        }
        assert!(residue < 1e-13);
    }

    #[test]
    fn roundtrip_and_dft_oracle_on_8x8() {
        let g = Grid::square(8).unwrap();
        let mut rng = Rng::seed(42);
        let f = rng_field(g, &mut rng);

        let hat = transform(&f);
        let back = inverse_transform(&hat);
        let err = back
            .values()
            .iter()
            .zip(f.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "roundtrip max error {err}");

        // Direct O(N^2) discrete Fourier sum, independent of the FFT path.
        let oracle = dft_oracle(&f);
        let mut diff = 0.0f64;
        for q in 0..8 {
            for p in 0..8 {
                diff = diff.max((hat.coeffs()[q * 8 + p] - oracle[q * 8 + p]).norm());
            }
        }
        assert!(diff < 1e-12, "DFT oracle disagreement {diff}");
    }

    #[test]
    fn transform_is_linear() {
        let g = Grid::square(16).unwrap();
        let mut rng = Rng::seed(7);
        let a = rng_field(g, &mut rng);
        let b = rng_field(g, &mut rng);
        let (ca, cb) = (1.7, -0.3);
        let mut combo = a.scaled(ca);
        combo.axpy(cb, &b);
        let lhs = transform(&combo);
        let (ha, hb) = (transform(&a), transform(&b));
        let mut err = 0.0f64;
        for i in 0..g.len() {
            err = err.max((lhs.coeffs()[i] - (ha.coeffs()[i] * ca + hb.coeffs()[i] * cb)).norm());
        }
        assert!(err < 1e-12);
    }

    #[test]
    fn parseval() {
        let g = Grid::square(64).unwrap();
        let mut rng = Rng::seed(3);
        let f = rng_field(g, &mut rng);
        let lhs = f.inner_l2(&f).unwrap();
        let rhs = g.total_measure() * transform(&f).power();
        assert!(
            (lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0),
            "parseval gap {}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn gradient_of_sin_x() {
        let g = Grid::square(32).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x.sin());
        let grad = gradient(&f);
        let exact = ScalarField::from_fn(g, |x, _| x.cos());
        let ex = grad.x().minus(&exact).unwrap().linf_norm();
        let ey = grad.y().linf_norm();
        assert!(ex < 1e-12 && ey < 1e-12, "grad errors {ex} {ey}");
    }

    #[test]
    fn perp_gradient_is_divergence_free() {
        let g = Grid::square(32).unwrap();
        let mut rng = Rng::seed(11);
        let psi = rng_field(g, &mut rng);
        let v = perp_gradient(&psi);
        assert!(divergence(&v).linf_norm() < 1e-12);
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let g = Grid::square(32).unwrap();
        let mut rng = Rng::seed(13);
        let f = rng_field(g, &mut rng);
        assert!(scalar_curl(&gradient(&f)).linf_norm() < 1e-12);
    }

    #[test]
    fn derivative_operators_are_linear() {
        let g = Grid::square(16).unwrap();
        let mut rng = Rng::seed(17);
        let a = rng_field(g, &mut rng);
        let b = rng_field(g, &mut rng);
        let mut combo = a.scaled(2.5);
        combo.axpy(-1.25, &b);
        let lhs = deriv_x(&combo);
        let mut rhs = deriv_x(&a).scaled(2.5);
        rhs.axpy(-1.25, &deriv_x(&b));
        assert!(lhs.minus(&rhs).unwrap().linf_norm() < 1e-12);
    }

    #[test]
    fn laplacian_inverse_solves() {
        let g = Grid::square(32).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (2.0 * x).cos() * y.sin());
        // Laplacian of f is -(4+1) f.
        let u = laplacian_inverse(&f.scaled(-5.0));
        assert!(u.minus(&f).unwrap().linf_norm() < 1e-12);
    }

    #[test]
    fn dealias_removes_high_modes_only() {
        let g = Grid::square(16).unwrap();
        // nx/3 = 5.33: |k| <= 5 kept, |k| >= 6 dropped.
        let f = ScalarField::from_fn(g, |x, _| (5.0 * x).cos() + (6.0 * x).cos());
        let d = dealias(&f);
        let expect = ScalarField::from_fn(g, |x, _| (5.0 * x).cos());
        assert!(d.minus(&expect).unwrap().linf_norm() < 1e-12);
    }
}

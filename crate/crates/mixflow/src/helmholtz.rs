//! Helmholtz decompositions with respect to a weight density, and the
//! variable-coefficient elliptic solver behind them.
//!
//! A field `v` splits as `v = v_p + v_r` with `v_p = mu * grad(xi)` and
//! `div(mu * v_r) = 0`; the parts are L2-orthogonal. The potential `xi`
//! solves `div(mu^2 grad xi) = div(mu v)`, a strictly elliptic problem as
//! long as `mu` is bounded away from zero. The `mu = 1` case is the
//! classical Leray decomposition and is solved exactly per mode.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::spectral::{self, SpectralField};

/// Positivity floor for weight densities (relative to unit-mean densities).
/// Weights below this make the elliptic problem ill-posed here.
pub const EPS_DENSITY: f64 = 1e-3;

/// Default relative residual tolerance for the iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Result of a weighted Poisson solve.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Zero-mean potential.
    pub xi: ScalarField,
    /// Achieved relative residual `|div(coeff grad xi) - rhs| / |rhs|`.
    pub residual: f64,
    pub iterations: usize,
}

/// Weighted Helmholtz decomposition `v = v_p + v_r`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Potential part `mu * grad(xi)`.
    pub v_p: VectorField,
    /// Rotational part; `div(mu * v_r)` vanishes to solver tolerance.
    pub v_r: VectorField,
    /// Zero-mean potential.
    pub xi: ScalarField,
    /// Relative residual achieved by the underlying elliptic solve.
    pub residual: f64,
}

/// `-div(coeff * grad(xi))`, the SPD operator the CG iteration inverts.
fn neg_weighted_laplacian(coeff: &ScalarField, xi: &ScalarField) -> ScalarField {
    let grad = spectral::gradient(xi);
    let mut out = spectral::divergence(&grad.weighted_by(coeff));
    out.scale(-1.0);
    out
}

/// Exact inverse of `-mean(coeff) * Laplacian` on mean-zero fields; the
/// constant-coefficient preconditioner.
fn spectral_preconditioner(coeff_mean: f64, r: &ScalarField) -> ScalarField {
    let mut hat = spectral::transform(r);
    hat.apply_factors(|kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / (coeff_mean * k2)
        }
    });
    spectral::inverse_transform(&hat)
}

/// Solve `div(coeff * grad(xi)) = rhs` on the torus for the zero-mean `xi`.
///
/// `coeff` must satisfy `min(coeff) >= EPS_DENSITY` and `rhs` must have zero
/// mean (the compatibility condition on a closed domain). Preconditioned
/// conjugate gradients; iteration cap `10 * (nx + ny)`.
pub fn weighted_poisson_solve(
    coeff: &ScalarField,
    rhs: &ScalarField,
    tol: f64,
) -> Result<PoissonSolution> {
    coeff.grid().check_same(rhs.grid())?;
    let cmin = coeff.min_value();
    if cmin < EPS_DENSITY {
        return Err(Error::Degenerate(format!(
            "coefficient minimum {cmin:.3e} below floor {EPS_DENSITY:.1e}"
        )));
    }
    let rhs_norm = rhs.l2_norm();
    if rhs_norm == 0.0 {
        return Ok(PoissonSolution {
            xi: ScalarField::zeros(*rhs.grid()),
            residual: 0.0,
            iterations: 0,
        });
    }
    let mean_scale = rhs.grid().total_measure().sqrt();
    if (rhs.mean() * mean_scale).abs() > 1e-10 * rhs_norm {
        return Err(Error::Solvability(format!(
            "right-hand side mean {:.3e} is not zero; no periodic solution exists",
            rhs.mean()
        )));
    }

    // CG on the SPD system -div(coeff grad xi) = -rhs.
    let mut b = rhs.scaled(-1.0);
    b.remove_mean();
    let cmean = coeff.mean();
    let cap = 10 * (coeff.grid().nx() + coeff.grid().ny());

    let mut xi = ScalarField::zeros(*rhs.grid());
    let mut r = b.clone();
    let mut z = spectral_preconditioner(cmean, &r);
    let mut p = z.clone();
    let mut rz = r.inner_l2(&z)?;
    let mut res_norm = r.l2_norm();
    let mut iterations = 0;

    while res_norm > tol * rhs_norm && iterations < cap {
        let ap = neg_weighted_laplacian(coeff, &p);
        let pap = p.inner_l2(&ap)?;
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        xi.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        r.remove_mean();
        res_norm = r.l2_norm();
        z = spectral_preconditioner(cmean, &r);
        let rz_new = r.inner_l2(&z)?;
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_new = z.clone();
        p_new.axpy(beta, &p);
        p = p_new;
        iterations += 1;
    }

    xi.remove_mean();
    // Report the true residual, not the recurrence residual.
    let true_res = neg_weighted_laplacian(coeff, &xi)
        .minus(&b)?
        .l2_norm()
        / rhs_norm;
    if true_res > tol {
        return Err(Error::Convergence {
            achieved: true_res,
            required: tol,
            iterations,
        });
    }
    Ok(PoissonSolution {
        xi,
        residual: true_res,
        iterations,
    })
}

/// Leray decomposition (`mu = 1`), solved exactly per mode: `v_p` is the
/// pure-gradient part, `v_r` the divergence-free part (including the mean).
pub fn leray_decompose(v: &VectorField) -> Decomposition {
    let grid = *v.grid();
    let hx = spectral::transform(v.x());
    let hy = spectral::transform(v.y());
    let mut px = SpectralField::zeros(grid);
    let mut py = SpectralField::zeros(grid);
    let mut xi_hat = SpectralField::zeros(grid);
    let (nx, ny) = (grid.nx(), grid.ny());
    for q in 0..ny {
        for p in 0..nx {
            let idx = q * nx + p;
            let (kx, ky) = wavevector(&hx, p, q);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let dot = kx * hx.coeffs()[idx] + ky * hy.coeffs()[idx];
            px.coeffs_mut()[idx] = kx * dot / k2;
            py.coeffs_mut()[idx] = ky * dot / k2;
            // v_p = grad(xi): i*k*xi_hat = k (k.v)/k2 => xi_hat = -i (k.v)/k2.
            xi_hat.coeffs_mut()[idx] = num_complex::Complex64::new(0.0, -1.0) * dot / k2;
        }
    }
    let v_p = VectorField::from_components(
        spectral::inverse_transform(&px),
        spectral::inverse_transform(&py),
    )
    .expect("components share a grid");
    let v_r = v.minus(&v_p).expect("same grid");
    Decomposition {
        v_p,
        v_r,
        xi: spectral::inverse_transform(&xi_hat),
        residual: 0.0,
    }
}

/// Orthogonal projection onto divergence-free fields (rotational part of the
/// Leray decomposition; keeps the mean flow).
pub fn leray_project(v: &VectorField) -> VectorField {
    leray_decompose(v).v_r
}

fn wavevector(hat: &SpectralField, p: usize, q: usize) -> (f64, f64) {
    let g = hat.grid();
    let half = |k: i64, n: usize| if 2 * k == -(n as i64) { 0i64 } else { k };
    let kx = half(hat.kx_int(p), g.nx()) as f64 * 2.0 * std::f64::consts::PI / g.lx();
    let ky = half(hat.ky_int(q), g.ny()) as f64 * 2.0 * std::f64::consts::PI / g.ly();
    (kx, ky)
}

/// Helmholtz decomposition of `v` with respect to the weight `mu`.
///
/// Solves `div(mu^2 grad xi) = div(mu v)` and sets `v_p = mu grad(xi)`,
/// `v_r = v - v_p`. Constant weights dispatch to the exact spectral path.
pub fn weighted_helmholtz_decompose(
    v: &VectorField,
    mu: &ScalarField,
    tol: f64,
) -> Result<Decomposition> {
    v.grid().check_same(mu.grid())?;
    let (lo, hi) = (mu.min_value(), mu.max_value());
    if lo < EPS_DENSITY {
        return Err(Error::Degenerate(format!(
            "weight minimum {lo:.3e} below floor {EPS_DENSITY:.1e}"
        )));
    }
    if hi - lo <= 1e-14 * hi.abs() {
        // Constant weight: same projectors as mu = 1, with xi scaled by mu.
        let mut dec = leray_decompose(v);
        dec.xi.scale(1.0 / lo);
        return Ok(dec);
    }
    let coeff = mu.pointwise_mul(mu);
    let rhs = spectral::divergence(&v.weighted_by(mu));
    let sol = weighted_poisson_solve(&coeff, &rhs, tol)?;
    let v_p = spectral::gradient(&sol.xi).weighted_by(mu);
    let v_r = v.minus(&v_p)?;
    Ok(Decomposition {
        v_p,
        v_r,
        xi: sol.xi,
        residual: sol.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::presets;

    #[test]
    fn constant_coefficient_poisson_analytic() {
        let g = Grid::square(32).unwrap();
        let coeff = ScalarField::constant(g, 1.0);
        let rhs = ScalarField::from_fn(g, |x, _| -x.sin());
        let sol = weighted_poisson_solve(&coeff, &rhs, 1e-12).unwrap();
        let exact = ScalarField::from_fn(g, |x, _| x.sin());
        assert!(sol.xi.minus(&exact).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn manufactured_variable_coefficient() {
        let g = Grid::square(64).unwrap();
        let tol = 1e-10;
        let exact = ScalarField::from_fn(g, |_, y| y.sin());
        let coeff = ScalarField::from_fn(g, |x, _| 2.0 + x.cos());
        let rhs = spectral::divergence(&spectral::gradient(&exact).weighted_by(&coeff));
        let sol = weighted_poisson_solve(&coeff, &rhs, tol).unwrap();
        let err = sol.xi.minus(&exact).unwrap().l2_norm() / exact.l2_norm();
        assert!(err <= 10.0 * tol, "manufactured-solution error {err:.3e}");
    }

    #[test]
    fn nonzero_mean_rhs_is_unsolvable() {
        let g = Grid::square(16).unwrap();
        let coeff = ScalarField::constant(g, 1.0);
        let rhs = ScalarField::constant(g, 1.0);
        match weighted_poisson_solve(&coeff, &rhs, 1e-10) {
            Err(Error::Solvability(_)) => {}
            other => panic!("expected solvability error, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_coefficient_rejected() {
        let g = Grid::square(16).unwrap();
        let coeff = ScalarField::constant(g, 1e-4);
        let rhs = ScalarField::from_fn(g, |x, _| x.sin());
        assert!(matches!(
            weighted_poisson_solve(&coeff, &rhs, 1e-10),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn constructed_decomposition_certificate() {
        // v = grad f + perp_grad g with mu = 1: the parts are recovered.
        let g = Grid::square(64).unwrap();
        let tol = 1e-10;
        let f = presets::random_band_limited(g, 21, 6);
        let h = presets::random_band_limited(g, 22, 6);
        let mut v = spectral::gradient(&f);
        v.axpy(1.0, &spectral::perp_gradient(&h));
        let mu = ScalarField::constant(g, 1.0);
        let dec = weighted_helmholtz_decompose(&v, &mu, tol).unwrap();
        let ep = dec.v_p.minus(&spectral::gradient(&f)).unwrap().l2_norm();
        let er = dec
            .v_r
            .minus(&spectral::perp_gradient(&h))
            .unwrap()
            .l2_norm();
        let scale = v.l2_norm();
        assert!(ep <= 10.0 * tol * scale, "potential part error {ep:.3e}");
        assert!(er <= 10.0 * tol * scale, "rotational part error {er:.3e}");
    }

    #[test]
    fn already_rotational_field_has_no_potential_part() {
        // v = (1/mu) perp_grad(g) satisfies div(mu v) = 0 identically.
        let g = Grid::square(64).unwrap();
        let tol = 1e-10;
        let mu = presets::random_density(g, 30, 4);
        let stream = presets::random_band_limited(g, 31, 4);
        let rot = spectral::perp_gradient(&stream);
        let inv_mu =
            ScalarField::from_values(g, mu.values().iter().map(|m| 1.0 / m).collect()).unwrap();
        let v = rot.weighted_by(&inv_mu);
        let dec = weighted_helmholtz_decompose(&v, &mu, tol).unwrap();
        assert!(
            dec.v_p.l2_norm() <= 10.0 * tol * v.l2_norm(),
            "potential part {:.3e} of rotational input",
            dec.v_p.l2_norm()
        );
    }

    #[test]
    fn pure_gradient_has_no_rotational_part() {
        let g = Grid::square(64).unwrap();
        let f = presets::random_band_limited(g, 40, 6);
        let v = spectral::gradient(&f);
        let dec = leray_decompose(&v);
        assert!(dec.v_r.l2_norm() <= 1e-10 * v.l2_norm());
        // Hence the Leray projection of any pure gradient is zero.
        assert!(leray_project(&v).l2_norm() <= 1e-10 * v.l2_norm());
    }

    #[test]
    fn leray_rotational_part_is_divergence_free() {
        let g = Grid::square(64).unwrap();
        let v = VectorField::from_fn(g, |x, y| ((x + 2.0 * y).sin(), (3.0 * x - y).cos()));
        let dec = leray_decompose(&v);
        assert!(spectral::divergence(&dec.v_r).l2_norm() < 1e-10 * v.l2_norm());
        let mut sum = dec.v_p.clone();
        sum.axpy(1.0, &dec.v_r);
        assert!(sum.minus(&v).unwrap().l2_norm() < 1e-12 * v.l2_norm().max(1.0));
    }

    #[test]
    fn weighted_decomposition_invariants() {
        let g = Grid::square(64).unwrap();
        let tol = 1e-10;
        for seed in 0..5u64 {
            let v = VectorField::from_components(
                presets::random_band_limited(g, 100 + seed, 8),
                presets::random_band_limited(g, 200 + seed, 8),
            )
            .unwrap();
            // mu in [0.5, 2].
            let mut mu = presets::random_band_limited(g, 300 + seed, 8);
            mu.scale(0.75);
            mu.shift(1.25);
            let dec = weighted_helmholtz_decompose(&v, &mu, tol).unwrap();
            let scale = v.l2_norm();

            let mut sum = dec.v_p.clone();
            sum.axpy(1.0, &dec.v_r);
            assert!(sum.minus(&v).unwrap().l2_norm() <= tol * scale);

            let ortho = dec.v_p.inner_l2(&dec.v_r).unwrap().abs();
            let denom = dec.v_p.l2_norm() * dec.v_r.l2_norm();
            assert!(ortho <= tol * denom.max(1e-30), "orthogonality {ortho:.3e}");

            let wdiv = spectral::divergence(&dec.v_r.weighted_by(&mu)).l2_norm();
            assert!(wdiv <= 10.0 * tol * scale, "weighted divergence {wdiv:.3e}");

            assert!(dec.xi.mean().abs() < 1e-12);
        }
    }

    #[test]
    fn projector_idempotence_and_annihilation() {
        let g = Grid::square(64).unwrap();
        let tol = 1e-10;
        let v = VectorField::from_components(
            presets::random_band_limited(g, 77, 6),
            presets::random_band_limited(g, 78, 6),
        )
        .unwrap();
        let mut mu = presets::random_band_limited(g, 79, 6);
        mu.scale(0.5);
        mu.shift(1.2);
        let dec = weighted_helmholtz_decompose(&v, &mu, tol).unwrap();
        let scale = v.l2_norm();

        // Decomposing v_r again yields no new potential part.
        let again = weighted_helmholtz_decompose(&dec.v_r, &mu, tol).unwrap();
        assert!(again.v_p.l2_norm() <= 10.0 * tol * scale);

        // Decomposing v_p again reproduces it (annihilated rotational part).
        let third = weighted_helmholtz_decompose(&dec.v_p, &mu, tol).unwrap();
        assert!(third.v_r.l2_norm() <= 10.0 * tol * scale);
        assert!(third.v_p.minus(&dec.v_p).unwrap().l2_norm() <= 10.0 * tol * scale);
    }
}

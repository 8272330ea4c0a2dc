//! Effort norms, mixedness metrics, and the minimum-effort velocity
//! selection solver.
//!
//! An effort norm is `|v| = |K v|_L2` for a self-adjoint nonnegative `K*K`
//! realized as a spectral multiplier. The velocity selection problem picks,
//! among all divergence-free `v` with `-div(rho v) = tau`, the one of least
//! effort; its optimality system is
//!
//! ```text
//! tau = -div(rho v),   0 = div v,   0 = K*K v - rho grad(lambda) - grad(gamma)
//! ```
//!
//! which is solved by eliminating `v = (K*K)^{-1}(rho grad lambda + grad
//! gamma)` and running preconditioned CG on the resulting symmetric positive
//! semidefinite system in `(lambda, gamma)`.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::helmholtz::EPS_DENSITY;
use crate::spectral::{self, MultiplierKind};
use crate::transport::{advect_adjoint_velocity, advect_rhs};

/// Effort norm selector: which operator `K` weighs the velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Kinetic energy, `K = I`.
    L2,
    /// Sobolev `H1`, `K*K = I - Laplacian`.
    H1,
    /// Enstrophy, `K = grad` (kills constants).
    Enstrophy,
    /// Palenstrophy, `K = Laplacian` (kills constants).
    Palenstrophy,
}

impl NormKind {
    /// Spectral multiplier of `K*K`.
    pub fn kk_multiplier(&self) -> MultiplierKind {
        match self {
            NormKind::L2 => MultiplierKind::Identity,
            NormKind::H1 => MultiplierKind::OnePlusNegLaplacian,
            NormKind::Enstrophy => MultiplierKind::NegLaplacian,
            NormKind::Palenstrophy => MultiplierKind::Bilaplacian,
        }
    }

    /// Whether constant fields lie in the kernel of `K`; such norms are
    /// seminorms on the full space and the mean velocity mode is pinned to
    /// zero when inverting `K*K`.
    pub fn kills_constants(&self) -> bool {
        matches!(self, NormKind::Enstrophy | NormKind::Palenstrophy)
    }

    pub fn name(&self) -> &'static str {
        match self {
            NormKind::L2 => "l2",
            NormKind::H1 => "h1",
            NormKind::Enstrophy => "enstrophy",
            NormKind::Palenstrophy => "palenstrophy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(NormKind::L2),
            "h1" => Ok(NormKind::H1),
            "enstrophy" => Ok(NormKind::Enstrophy),
            "palenstrophy" => Ok(NormKind::Palenstrophy),
            other => Err(Error::Config(format!("unknown norm kind '{other}'"))),
        }
    }
}

/// Mixedness metric selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    /// Plain `L2` distance.
    L2,
    /// Negative-order Sobolev (mix-norm style): spectral weight
    /// `(1 + |kappa|^2)^{-s}` on the squared coefficient differences.
    HNeg { s: f64 },
}

impl MetricKind {
    pub fn hneg_default() -> Self {
        MetricKind::HNeg { s: 1.0 }
    }

    fn weight(&self, k2: f64) -> f64 {
        match self {
            MetricKind::L2 => 1.0,
            MetricKind::HNeg { s } => (1.0 + k2).powf(-s),
        }
    }

    pub fn name(&self) -> String {
        match self {
            MetricKind::L2 => "l2".into(),
            MetricKind::HNeg { s } => format!("hneg:{s}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "l2" {
            return Ok(MetricKind::L2);
        }
        if s == "hneg" {
            return Ok(MetricKind::hneg_default());
        }
        if let Some(rest) = s.strip_prefix("hneg:") {
            let order: f64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad hneg order '{rest}'")))?;
            if order <= 0.0 {
                return Err(Error::Config("hneg order must be positive".into()));
            }
            return Ok(MetricKind::HNeg { s: order });
        }
        Err(Error::Config(format!("unknown metric kind '{s}'")))
    }
}

/// `|v| = <K*K v, v>^(1/2)`, evaluated spectrally.
pub fn control_norm(v: &VectorField, kind: NormKind) -> f64 {
    control_norm_sq(v, kind).max(0.0).sqrt()
}

pub(crate) fn control_norm_sq(v: &VectorField, kind: NormKind) -> f64 {
    let mult = kind.kk_multiplier();
    let measure = v.grid().total_measure();
    let mut total = 0.0;
    for comp in [v.x(), v.y()] {
        let mut hat = spectral::transform(comp);
        let coeffs = hat.coeffs_mut();
        let mut acc = 0.0;
        let grid = *v.grid();
        let (nx, ny) = (grid.nx(), grid.ny());
        for q in 0..ny {
            for p in 0..nx {
                let k2 = wave2(&grid, p, q);
                acc += mult.factor(k2) * coeffs[q * nx + p].norm_sqr();
            }
        }
        total += measure * acc;
    }
    total
}

fn wave2(grid: &crate::grid::Grid, p: usize, q: usize) -> f64 {
    let signed = |p: usize, n: usize| -> f64 {
        let k = if p < n / 2 { p as i64 } else { p as i64 - n as i64 };
        k as f64
    };
    let kx = 2.0 * std::f64::consts::PI * signed(p, grid.nx()) / grid.lx();
    let ky = 2.0 * std::f64::consts::PI * signed(q, grid.ny()) / grid.ly();
    kx * kx + ky * ky
}

/// Mixedness distance `d(rho_a, rho_b)`.
pub fn mix_distance(a: &ScalarField, b: &ScalarField, kind: MetricKind) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let diff = a.minus(b)?;
    let grid = *a.grid();
    let hat = spectral::transform(&diff);
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut acc = 0.0;
    for q in 0..ny {
        for p in 0..nx {
            acc += kind.weight(wave2(&grid, p, q)) * hat.coeffs()[q * nx + p].norm_sqr();
        }
    }
    Ok((grid.total_measure() * acc).max(0.0).sqrt())
}

/// L2 gradient of `d^2(., target)` at `rho`: twice the smoothed difference
/// `2 M_s (rho - target)`, where `M_s` is the metric's spectral weight.
pub fn mix_distance_gradient(
    rho: &ScalarField,
    target: &ScalarField,
    kind: MetricKind,
) -> Result<ScalarField> {
    rho.grid().check_same(target.grid())?;
    let diff = rho.minus(target)?;
    let mut hat = spectral::transform(&diff);
    hat.apply_factors(|kx, ky| 2.0 * kind.weight(kx * kx + ky * ky));
    Ok(spectral::inverse_transform(&hat))
}

/// Solution of the velocity selection problem with certified residuals.
#[derive(Debug, Clone)]
pub struct VelocitySelection {
    pub v: VectorField,
    pub lambda: ScalarField,
    pub gamma: ScalarField,
    /// `|-div(rho v) - tau| / |tau|`.
    pub continuity_residual: f64,
    /// `|div v| / |tau|`.
    pub divergence_residual: f64,
    /// `|K*K v - rho grad lambda - grad gamma| / |K*K v|`, with the constant
    /// component removed for norms whose `K` kills constants.
    pub stationarity_residual: f64,
    pub iterations: usize,
}

fn kk_inverse(v: &VectorField, kind: NormKind) -> VectorField {
    let mult = kind.kk_multiplier();
    let inv = |comp: &ScalarField| {
        let mut hat = spectral::transform(comp);
        hat.apply_factors(|kx, ky| mult.inverse_factor(kx * kx + ky * ky));
        spectral::inverse_transform(&hat)
    };
    VectorField::from_components(inv(v.x()), inv(v.y())).expect("components share a grid")
}

/// Velocity generated by the multiplier `lambda`:
/// `v = (K*K)^{-1} leray(rho grad lambda)`.
///
/// `K*K` is an isotropic Fourier multiplier, so it commutes with the Leray
/// projector and eliminating `gamma` from the stationarity system
/// `K*K v = rho grad lambda + grad gamma` per mode is exact: `grad gamma` is
/// minus the potential part of `rho grad lambda`, and `v` is divergence-free
/// by construction. The remaining unknown is `lambda` alone. Norms whose `K`
/// kills constants invert to zero on the mean mode, pinning the mean
/// velocity to zero.
fn velocity_from_lambda(rho_d: &ScalarField, lambda: &ScalarField, kind: NormKind) -> VectorField {
    let w = advect_adjoint_velocity(rho_d, lambda);
    kk_inverse(&crate::helmholtz::leray_project(&w), kind)
}

/// Reduced operator `lambda -> -div(rho v(lambda))`; symmetric positive
/// semidefinite (a Gram operator of the constraint adjoint against the SPD
/// quadratic form of `(K*K)^{-1} leray`).
fn reduced_apply(rho_d: &ScalarField, lambda: &ScalarField, kind: NormKind) -> ScalarField {
    advect_rhs(rho_d, &velocity_from_lambda(rho_d, lambda, kind))
}

/// Spectral preconditioner: inverse of `-div((K*K)^{-1} grad .)`, the
/// constant-density shell of the reduced operator (PCG is invariant to the
/// overall scale).
fn reduced_precondition(r: &ScalarField, kind: NormKind) -> ScalarField {
    let mult = kind.kk_multiplier();
    let mut hat = spectral::transform(r);
    hat.apply_factors(|kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            return 0.0;
        }
        let m = mult.factor(k2);
        if m == 0.0 {
            return 0.0;
        }
        m / k2
    });
    spectral::inverse_transform(&hat)
}

/// Options for `select_velocity`.
#[derive(Debug, Clone, Copy)]
pub struct SelectOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Iterations of relative stagnation after which the constraints are
    /// declared infeasible.
    pub stagnation_window: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            tol: crate::helmholtz::DEFAULT_TOL,
            max_iterations: 2000,
            stagnation_window: 100,
        }
    }
}

/// Minimum-effort velocity selection: minimize `|K v|` subject to
/// `-div(rho v) = tau` and `div v = 0`.
pub fn select_velocity(
    rho: &ScalarField,
    tau: &ScalarField,
    kind: NormKind,
    opts: &SelectOptions,
) -> Result<VelocitySelection> {
    rho.grid().check_same(tau.grid())?;
    let grid = *rho.grid();
    if rho.min_value() < EPS_DENSITY {
        return Err(Error::Degenerate(format!(
            "density minimum {:.3e} below floor {EPS_DENSITY:.1e}",
            rho.min_value()
        )));
    }
    let tau_norm = tau.l2_norm();
    if (tau.mean() * grid.total_measure().sqrt()).abs() > 1e-10 * tau_norm.max(1e-300) {
        return Err(Error::Solvability(format!(
            "tangent field mean {:.3e} nonzero: total mass cannot change",
            tau.mean()
        )));
    }
    if tau_norm == 0.0 {
        return Ok(VelocitySelection {
            v: VectorField::zeros(grid),
            lambda: ScalarField::zeros(grid),
            gamma: ScalarField::zeros(grid),
            continuity_residual: 0.0,
            divergence_residual: 0.0,
            stationarity_residual: 0.0,
            iterations: 0,
        });
    }

    let rho_d = spectral::dealias(rho);
    let tol = opts.tol;

    // PCG on lambda; the incompressibility constraint is exact by
    // construction of v(lambda), see `velocity_from_lambda`.
    let mut lambda = ScalarField::zeros(grid);
    let mut r = tau.clone();
    r.remove_mean();

    let z = reduced_precondition(&r, kind);
    let mut rz = r.inner_l2(&z)?;
    let mut p = z;
    let mut res = r.l2_norm();
    let mut best_res = res;
    let mut since_improvement = 0usize;
    let mut iterations = 0usize;

    while res > tol * tau_norm && iterations < opts.max_iterations {
        let ap = reduced_apply(&rho_d, &p, kind);
        let pap = p.inner_l2(&ap)?;
        if pap <= f64::EPSILON * rz.abs() {
            // Search direction fell in the operator kernel: the remaining
            // residual cannot be reduced, the constraints are inconsistent.
            return Err(Error::Infeasible {
                residual: best_res / tau_norm,
            });
        }
        let alpha = rz / pap;
        lambda.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        r.remove_mean();
        res = r.l2_norm();
        if res < best_res * (1.0 - 1e-6) {
            best_res = res;
            since_improvement = 0;
        } else {
            best_res = best_res.min(res);
            since_improvement += 1;
            if since_improvement >= opts.stagnation_window && res > 10.0 * tol * tau_norm {
                return Err(Error::Infeasible {
                    residual: best_res / tau_norm,
                });
            }
        }
        let nz = reduced_precondition(&r, kind);
        let rz_new = r.inner_l2(&nz)?;
        let beta = rz_new / rz;
        rz = rz_new;
        let mut np = nz;
        np.axpy(beta, &p);
        p = np;
        iterations += 1;
    }

    lambda.remove_mean();
    let v = velocity_from_lambda(&rho_d, &lambda, kind);

    // gamma from the exact per-mode elimination: grad(gamma) is minus the
    // potential part of rho grad lambda.
    let w = advect_adjoint_velocity(&rho_d, &lambda);
    let gamma = crate::helmholtz::leray_decompose(&w).xi.scaled(-1.0);

    // Certify against the true constraints.
    let cont = advect_rhs(&rho_d, &v).minus(tau)?.l2_norm() / tau_norm;
    let div = spectral::divergence(&v).l2_norm() / tau_norm;
    let joint = (cont * cont + div * div).sqrt();
    if joint > tol {
        if iterations >= opts.max_iterations {
            return Err(Error::Convergence {
                achieved: joint,
                required: tol,
                iterations,
            });
        }
        return Err(Error::Infeasible { residual: joint });
    }

    // Stationarity: K*K v - rho grad lambda - grad gamma, with the constant
    // component removed when K kills constants (the mean mode was pinned).
    let mut stat = spectral::apply_multiplier_vec(&v, kind.kk_multiplier());
    stat.axpy(-1.0, &w);
    stat.axpy(-1.0, &spectral::gradient(&gamma));
    if kind.kills_constants() {
        let m = stat.mean_components();
        stat.shift([-m[0], -m[1]]);
    }
    let kk_v_norm = spectral::apply_multiplier_vec(&v, kind.kk_multiplier()).l2_norm();
    let stationarity = stat.l2_norm() / kk_v_norm.max(1e-300);

    Ok(VelocitySelection {
        v,
        lambda,
        gamma,
        continuity_residual: cont,
        divergence_residual: div,
        stationarity_residual: stationarity,
        iterations,
    })
}

/// Metric derivative of a density curve with tangent `tau` at `rho`: the
/// least effort norm among velocities generating `tau`.
pub fn metric_derivative(
    rho: &ScalarField,
    tau: &ScalarField,
    kind: NormKind,
    opts: &SelectOptions,
) -> Result<f64> {
    let sel = select_velocity(rho, tau, kind, opts)?;
    Ok(control_norm(&sel.v, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::presets;

    fn grid() -> Grid {
        Grid::square(32).unwrap()
    }

    #[test]
    fn norm_of_zero_field() {
        assert_eq!(control_norm(&VectorField::zeros(grid()), NormKind::L2), 0.0);
    }

    #[test]
    fn l2_norm_of_sine() {
        // Oracle: direct quadrature of int sin^2 x over the torus = 2 pi^2.
        let v = VectorField::from_fn(grid(), |x, _| (x.sin(), 0.0));
        let frozen = (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        let got = control_norm(&v, NormKind::L2);
        assert!((got - frozen).abs() < 1e-10, "got {got}, frozen {frozen}");
    }

    #[test]
    fn enstrophy_norm_of_shear() {
        // |grad (sin y, 0)|^2 = int cos^2 y = 2 pi^2.
        let v = VectorField::from_fn(grid(), |_, y| (y.sin(), 0.0));
        let frozen = (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        let got = control_norm(&v, NormKind::Enstrophy);
        assert!((got - frozen).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn distance_identity_of_indiscernibles() {
        let rho = presets::random_density(grid(), 3, 5);
        for kind in [MetricKind::L2, MetricKind::hneg_default()] {
            assert_eq!(mix_distance(&rho, &rho, kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn hneg_distance_of_cosine_difference() {
        // rho_a - rho_b = cos x: two modes at |k| = 1 with coefficient 1/2,
        // weight (1+1)^{-1}; d^2 = (2 pi)^2 * 2 * (1/4) * (1/2) = pi^2.
        let g = grid();
        let a = ScalarField::from_fn(g, |x, _| 1.0 + x.cos());
        let b = ScalarField::constant(g, 1.0);
        let d = mix_distance(&a, &b, MetricKind::hneg_default()).unwrap();
        assert!(
            (d - std::f64::consts::PI).abs() < 1e-10,
            "hneg distance {d}"
        );
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let g = Grid::square(16).unwrap();
        for kind in [MetricKind::L2, MetricKind::hneg_default()] {
            for seed in 0..100u64 {
                let a = presets::random_band_limited(g, 3 * seed + 1, 5);
                let b = presets::random_band_limited(g, 3 * seed + 2, 5);
                let c = presets::random_band_limited(g, 3 * seed + 3, 5);
                let dab = mix_distance(&a, &b, kind).unwrap();
                let dba = mix_distance(&b, &a, kind).unwrap();
                let dbc = mix_distance(&b, &c, kind).unwrap();
                let dac = mix_distance(&a, &c, kind).unwrap();
                assert!(dab >= 0.0);
                assert!((dab - dba).abs() <= 1e-12 * dab.max(1.0));
                assert!(dac <= dab + dbc + 1e-12, "triangle violated");
            }
        }
    }

    #[test]
    fn distance_gradient_matches_finite_differences() {
        let g = Grid::square(16).unwrap();
        let rho = presets::random_density(g, 8, 5);
        let target = presets::random_density(g, 9, 5);
        for kind in [MetricKind::L2, MetricKind::hneg_default()] {
            let grad = mix_distance_gradient(&rho, &target, kind).unwrap();
            let dir = presets::random_band_limited(g, 10, 5);
            let eps = 1e-6;
            let mut plus = rho.clone();
            plus.axpy(eps, &dir);
            let mut minus = rho.clone();
            minus.axpy(-eps, &dir);
            let dp = mix_distance(&plus, &target, kind).unwrap().powi(2);
            let dm = mix_distance(&minus, &target, kind).unwrap().powi(2);
            let fd = (dp - dm) / (2.0 * eps);
            let an = grad.inner_l2(&dir).unwrap();
            assert!(
                (fd - an).abs() <= 1e-7 * an.abs().max(1.0),
                "fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn uniform_density_zero_tangent_gives_zero_velocity() {
        let g = grid();
        let rho = ScalarField::constant(g, 1.0);
        let tau = ScalarField::zeros(g);
        let sel = select_velocity(&rho, &tau, NormKind::L2, &SelectOptions::default()).unwrap();
        assert_eq!(sel.v.l2_norm(), 0.0);
        assert_eq!(sel.iterations, 0);
    }

    #[test]
    fn uniform_density_nonzero_tangent_is_infeasible() {
        // With rho = 1 the two constraints demand both -div v = tau and
        // div v = 0: contradictory for tau != 0.
        let g = grid();
        let rho = ScalarField::constant(g, 1.0);
        let tau = ScalarField::from_fn(g, |x, _| x.cos());
        match select_velocity(&rho, &tau, NormKind::L2, &SelectOptions::default()) {
            Err(Error::Infeasible { residual }) => {
                assert!(residual > 0.1, "residual should stay large, got {residual}");
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn nonzero_mean_tangent_rejected() {
        let g = grid();
        let rho = presets::random_density(g, 4, 4);
        let tau = ScalarField::constant(g, 0.5);
        assert!(matches!(
            select_velocity(&rho, &tau, NormKind::L2, &SelectOptions::default()),
            Err(Error::Solvability(_))
        ));
    }

    #[test]
    fn feasible_point_certificate() {
        // tau is generated by a known divergence-free v0; the selected v must
        // satisfy the constraints and do no worse than the certificate.
        let g = grid();
        let rho = ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * x.sin());
        let psi = presets::random_band_limited(g, 17, 4);
        let v0 = spectral::perp_gradient(&psi);
        let tau = advect_rhs(&rho, &v0);
        let opts = SelectOptions::default();
        for kind in [NormKind::L2, NormKind::H1, NormKind::Enstrophy] {
            let sel = select_velocity(&rho, &tau, kind, &opts).unwrap();
            assert!(sel.continuity_residual <= opts.tol, "{kind:?} continuity");
            assert!(sel.divergence_residual <= opts.tol, "{kind:?} divergence");
            let certificate = control_norm(&v0, kind);
            let achieved = control_norm(&sel.v, kind);
            assert!(
                achieved <= certificate * (1.0 + 1e-6),
                "{kind:?}: achieved {achieved} above certificate {certificate}"
            );
            assert!(
                sel.stationarity_residual < 1e-6,
                "{kind:?} stationarity {:.3e}",
                sel.stationarity_residual
            );
        }
    }

    #[test]
    fn l2_selection_matches_leray_projection_of_rho_grad_lambda() {
        let g = grid();
        let rho = ScalarField::from_fn(g, |x, y| 1.0 + 0.3 * (x + y).sin());
        let psi = presets::random_band_limited(g, 23, 4);
        let v0 = spectral::perp_gradient(&psi);
        let tau = advect_rhs(&rho, &v0);
        let opts = SelectOptions::default();
        let sel = select_velocity(&rho, &tau, NormKind::L2, &opts).unwrap();
        let w = advect_adjoint_velocity(&rho, &sel.lambda);
        let projected = crate::helmholtz::leray_project(&w);
        let err = sel.v.minus(&projected).unwrap().l2_norm();
        assert!(
            err <= 10.0 * opts.tol * sel.v.l2_norm().max(1.0),
            "projection identity error {err:.3e}"
        );
    }

    #[test]
    fn metric_derivative_identities() {
        let g = grid();
        let rho = ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * x.sin());
        let opts = SelectOptions::default();

        // Zero tangent: zero derivative.
        let zero = ScalarField::zeros(g);
        assert_eq!(
            metric_derivative(&rho, &zero, NormKind::L2, &opts).unwrap(),
            0.0
        );

        let psi = presets::random_band_limited(g, 29, 4);
        let v0 = spectral::perp_gradient(&psi);
        let tau = advect_rhs(&rho, &v0);

        // Equals the control norm of the selected velocity, by definition.
        let sel = select_velocity(&rho, &tau, NormKind::L2, &opts).unwrap();
        let md = metric_derivative(&rho, &tau, NormKind::L2, &opts).unwrap();
        assert_eq!(md, control_norm(&sel.v, NormKind::L2));

        // Bounded above by any feasible certificate.
        assert!(md <= control_norm(&v0, NormKind::L2) * (1.0 + 1e-6));

        // Absolute homogeneity in the tangent.
        let md_scaled = metric_derivative(&rho, &tau.scaled(-2.5), NormKind::L2, &opts).unwrap();
        assert!(
            (md_scaled - 2.5 * md).abs() <= 1e-8 * md.max(1.0),
            "homogeneity: {md_scaled} vs {}",
            2.5 * md
        );
    }
}

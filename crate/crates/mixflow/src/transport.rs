//! Density transport by divergence-free velocity fields.
//!
//! The dynamics are the continuity equation `drho/dt = -div(rho v)` with
//! `div v = 0`, discretized pseudo-spectrally: the product `rho v` is formed
//! pointwise from 2/3-dealiased factors and dealiased again, so the retained
//! modes are alias-free and the operator has an exact discrete adjoint. Time
//! stepping is classical RK4. Mass is conserved to roundoff because the
//! right-hand side is a divergence.
//!
//! The costate equation `dlambda/dt + v . grad(lambda) = 0` is the same
//! advection operator for divergence-free `v`, so the backward costate sweep
//! reuses this integrator on the time-reversed, sign-flipped control.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::metrics::{self, MetricKind};
use crate::presets;
use crate::spectral;

/// Safety factor in the advective CFL bound `dt <= CFL * h_min / max|v|`.
pub const CFL_SAFETY: f64 = 0.5;

/// Relative divergence tolerance for velocities claimed incompressible.
pub const DIV_TOL: f64 = 1e-8;

/// A time-dependent velocity field on `[0, T]`.
pub trait Control {
    fn velocity(&self, grid: &Grid, t: f64) -> VectorField;

    /// Upper bound on the maximum pointwise speed over `[t0, t1]`.
    fn speed_bound(&self, grid: &Grid, t0: f64, t1: f64) -> f64;

    /// Controls parameterized by streamfunctions are divergence-free exactly;
    /// everything else gets checked sample by sample.
    fn divergence_free_by_construction(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        "custom".into()
    }
}

/// Control given by a closure `(grid, t) -> VectorField`.
pub struct FnControl<F: Fn(&Grid, f64) -> VectorField> {
    f: F,
    bound: Option<f64>,
    name: String,
}

impl<F: Fn(&Grid, f64) -> VectorField> FnControl<F> {
    pub fn new(name: &str, f: F) -> Self {
        Self {
            f,
            bound: None,
            name: name.into(),
        }
    }

    /// Provide a known speed bound instead of the sampled estimate.
    pub fn with_speed_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }
}

impl<F: Fn(&Grid, f64) -> VectorField> Control for FnControl<F> {
    fn velocity(&self, grid: &Grid, t: f64) -> VectorField {
        (self.f)(grid, t)
    }

    fn speed_bound(&self, grid: &Grid, t0: f64, t1: f64) -> f64 {
        if let Some(b) = self.bound {
            return b;
        }
        let samples = 9;
        (0..=samples)
            .map(|i| t0 + (t1 - t0) * i as f64 / samples as f64)
            .map(|t| self.velocity(grid, t).max_speed())
            .fold(0.0, f64::max)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// The time-reversed, sign-flipped control `t -> -v(T - t)`; transporting
/// under it undoes transporting under `v`.
pub struct ReversedControl<'a, C: Control + ?Sized> {
    inner: &'a C,
    horizon: f64,
}

impl<'a, C: Control + ?Sized> ReversedControl<'a, C> {
    pub fn new(inner: &'a C, horizon: f64) -> Self {
        Self { inner, horizon }
    }
}

impl<C: Control + ?Sized> Control for ReversedControl<'_, C> {
    fn velocity(&self, grid: &Grid, t: f64) -> VectorField {
        let mut v = self.inner.velocity(grid, self.horizon - t);
        v.scale(-1.0);
        v
    }

    fn speed_bound(&self, grid: &Grid, t0: f64, t1: f64) -> f64 {
        self.inner
            .speed_bound(grid, self.horizon - t1, self.horizon - t0)
    }

    fn divergence_free_by_construction(&self) -> bool {
        self.inner.divergence_free_by_construction()
    }

    fn describe(&self) -> String {
        format!("reversed({})", self.inner.describe())
    }
}

/// `-div(dealias(rho) * dealias(v))`, dealiased: the discrete transport
/// right-hand side. For divergence-free `v` this coincides with the
/// advective form `-v . grad(rho)` up to dealiasing of the cross terms.
pub(crate) fn advect_rhs(rho: &ScalarField, v: &VectorField) -> ScalarField {
    let rho_d = spectral::dealias(rho);
    let v_d = spectral::dealias_vec(v);
    let mut out = spectral::divergence(&spectral::dealias_vec(&v_d.weighted_by(&rho_d)));
    out.scale(-1.0);
    out
}

/// Adjoint of `advect_rhs` in its density argument: `dealias(dealias(v) .
/// dealias(grad lambda))`.
pub(crate) fn advect_adjoint_density(v: &VectorField, lambda: &ScalarField) -> ScalarField {
    let v_d = spectral::dealias_vec(v);
    let g = spectral::dealias_vec(&spectral::gradient(lambda));
    let mut dot = v_d.x().pointwise_mul(g.x());
    dot.axpy(1.0, &v_d.y().pointwise_mul(g.y()));
    spectral::dealias(&dot)
}

/// Adjoint of `advect_rhs` in its velocity argument: the dealiased product
/// `rho * grad(lambda)`.
pub(crate) fn advect_adjoint_velocity(rho: &ScalarField, lambda: &ScalarField) -> VectorField {
    let rho_d = spectral::dealias(rho);
    let g = spectral::dealias_vec(&spectral::gradient(lambda));
    spectral::dealias_vec(&g.weighted_by(&rho_d))
}

/// Continuity-equation right-hand side `-div(rho v)` for an incompressible
/// `v`; rejects velocities with relative divergence above `DIV_TOL`.
pub fn continuity_rhs(rho: &ScalarField, v: &VectorField) -> Result<ScalarField> {
    rho.grid().check_same(v.grid())?;
    let vnorm = v.l2_norm();
    let div = spectral::divergence(v).l2_norm();
    if div > DIV_TOL * vnorm.max(1e-300) {
        return Err(Error::ConstraintViolation(format!(
            "velocity is not divergence-free: |div v| = {div:.3e}, |v| = {vnorm:.3e}"
        )));
    }
    Ok(advect_rhs(rho, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Integrate the time-reversed system (negated velocity, reversed clock).
    Backward,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub dt: f64,
    /// Store every `stride`-th step (the final state is always stored).
    pub stride: usize,
    pub direction: Direction,
}

impl IntegrateOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            stride: 1,
            direction: Direction::Forward,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn backward(mut self) -> Self {
        self.direction = Direction::Backward;
        self
    }
}

/// Time-stamped density snapshots along one integration.
#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    times: Vec<f64>,
    snapshots: Vec<ScalarField>,
    source: String,
}

impl DensityTrajectory {
    pub fn new(times: Vec<f64>, snapshots: Vec<ScalarField>, source: String) -> Result<Self> {
        if times.len() != snapshots.len() || times.is_empty() {
            return Err(Error::Config(
                "trajectory needs matching, nonempty times and snapshots".into(),
            ));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        let grid = *snapshots[0].grid();
        for s in &snapshots {
            grid.check_same(s.grid())?;
        }
        Ok(Self {
            times,
            snapshots,
            source,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &ScalarField {
        &self.snapshots[0]
    }

    pub fn final_snapshot(&self) -> &ScalarField {
        self.snapshots.last().expect("nonempty")
    }

    /// Snapshot at the stored time nearest to `t`.
    pub fn nearest(&self, t: f64) -> &ScalarField {
        let idx = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - t)
                    .abs()
                    .partial_cmp(&(b.1 - t).abs())
                    .expect("finite times")
            })
            .map(|(i, _)| i)
            .expect("nonempty");
        &self.snapshots[idx]
    }
}

fn plan_steps(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let n = (horizon / dt - 1e-12).ceil().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

fn check_cfl(grid: &Grid, dt: f64, vmax: f64) -> Result<()> {
    let h = grid.dx().min(grid.dy());
    if vmax > 0.0 && dt > CFL_SAFETY * h / vmax {
        return Err(Error::StepSize(format!(
            "dt = {dt:.3e} exceeds CFL bound {:.3e} (max speed {vmax:.3e}, cell {h:.3e})",
            CFL_SAFETY * h / vmax
        )));
    }
    Ok(())
}

/// Integrate the continuity equation from `rho0` under `control` over
/// `[0, horizon]`. `Direction::Backward` integrates the time-reversed system
/// starting from `rho0` as the terminal state; by time-reversal symmetry the
/// result at reversed time `s` equals the forward state at `horizon - s`.
pub fn integrate_transport(
    rho0: &ScalarField,
    control: &dyn Control,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<DensityTrajectory> {
    match opts.direction {
        Direction::Forward => integrate_advection(rho0, control, horizon, opts),
        Direction::Backward => {
            let reversed = ReversedControl::new(control, horizon);
            let fwd_opts = IntegrateOptions {
                direction: Direction::Forward,
                ..*opts
            };
            integrate_advection(rho0, &reversed, horizon, &fwd_opts)
        }
    }
}

fn integrate_advection(
    rho0: &ScalarField,
    control: &dyn Control,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<DensityTrajectory> {
    let grid = *rho0.grid();
    let (n_steps, dt) = plan_steps(horizon, opts.dt)?;
    let vmax = control.speed_bound(&grid, 0.0, horizon);
    check_cfl(&grid, dt, vmax)?;
    let check_div = !control.divergence_free_by_construction();

    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let mut rho = rho0.clone();
    times.push(0.0);
    snapshots.push(rho.clone());

    let mut v_right = sample_velocity(control, &grid, 0.0, check_div)?;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let v1 = v_right;
        let v_mid = sample_velocity(control, &grid, t + 0.5 * dt, check_div)?;
        v_right = sample_velocity(control, &grid, t + dt, check_div)?;

        rho = rk4_advect(&rho, &v1, &v_mid, &v_right, dt);
        if !rho.is_finite() {
            return Err(Error::Diverged { time: t });
        }
        let is_last = step + 1 == n_steps;
        if (step + 1) % opts.stride == 0 || is_last {
            times.push((step + 1) as f64 * dt);
            snapshots.push(rho.clone());
        }
    }

    DensityTrajectory::new(times, snapshots, control.describe())
}

fn sample_velocity(
    control: &dyn Control,
    grid: &Grid,
    t: f64,
    check_div: bool,
) -> Result<VectorField> {
    let v = control.velocity(grid, t);
    if check_div {
        let div = spectral::divergence(&v).l2_norm();
        if div > DIV_TOL * v.l2_norm().max(1e-300) {
            return Err(Error::ConstraintViolation(format!(
                "control velocity at t = {t} is not divergence-free (|div v| = {div:.3e})"
            )));
        }
    }
    Ok(v)
}

/// One classical RK4 step of `drho/dt = advect_rhs(rho, v(t))`; the two
/// middle stages share the midpoint velocity.
pub(crate) fn rk4_advect(
    rho: &ScalarField,
    v_left: &VectorField,
    v_mid: &VectorField,
    v_right: &VectorField,
    dt: f64,
) -> ScalarField {
    let k1 = advect_rhs(rho, v_left);
    let mut s = rho.clone();
    s.axpy(0.5 * dt, &k1);
    let k2 = advect_rhs(&s, v_mid);
    let mut s = rho.clone();
    s.axpy(0.5 * dt, &k2);
    let k3 = advect_rhs(&s, v_mid);
    let mut s = rho.clone();
    s.axpy(dt, &k3);
    let k4 = advect_rhs(&s, v_right);

    let mut out = rho.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    out
}

/// Advect the costate backward from its terminal condition: returns the
/// trajectory of `lambda` over `[0, horizon]` in the original (forward)
/// clock, `snapshots[0] = lambda(0)`, last snapshot `= lambda_terminal`.
pub fn integrate_costate(
    lambda_terminal: &ScalarField,
    control: &dyn Control,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<DensityTrajectory> {
    let back = integrate_transport(
        lambda_terminal,
        control,
        horizon,
        &IntegrateOptions {
            direction: Direction::Backward,
            ..*opts
        },
    )?;
    // Reversed clock s = horizon - t; flip back to the forward clock.
    let mut times: Vec<f64> = back.times().iter().rev().map(|s| horizon - s).collect();
    if let Some(first) = times.first_mut() {
        // Guard against -0.0 and roundoff at the endpoint.
        if first.abs() < 1e-14 {
            *first = 0.0;
        }
    }
    let snapshots: Vec<ScalarField> = back.snapshots().iter().rev().cloned().collect();
    DensityTrajectory::new(times, snapshots, format!("costate({})", control.describe()))
}

/// Per-snapshot conservation diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub mass: f64,
    pub l2_norm: f64,
    pub min: f64,
    pub max: f64,
    /// Mix-norm distance to the uniform density of equal mass.
    pub hneg_mixnorm: f64,
}

pub fn trajectory_diagnostics(traj: &DensityTrajectory) -> Vec<DiagnosticsRow> {
    traj.times()
        .iter()
        .zip(traj.snapshots())
        .map(|(&time, rho)| {
            let uniform = presets::uniform_matching_mass(rho);
            DiagnosticsRow {
                time,
                mass: rho.mass(),
                l2_norm: rho.l2_norm(),
                min: rho.min_value(),
                max: rho.max_value(),
                hneg_mixnorm: metrics::mix_distance(rho, &uniform, MetricKind::hneg_default())
                    .expect("same grid"),
            }
        })
        .collect()
}

/// Distribution of density values weighted by cell volume: the discrete
/// pushforward of the domain measure by `rho`. Values outside the range are
/// counted in the end bins and flagged.
#[derive(Debug, Clone)]
pub struct Histogram {
    edges: Vec<f64>,
    masses: Vec<f64>,
    clamped_below: usize,
    clamped_above: usize,
}

impl Histogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn clamped(&self) -> (usize, usize) {
        (self.clamped_below, self.clamped_above)
    }

    /// Exact 1D Wasserstein-1 distance between two histograms on the same
    /// bins, via cumulative sums.
    pub fn w1(&self, other: &Histogram) -> Result<f64> {
        if self.edges.len() != other.edges.len()
            || self
                .edges
                .iter()
                .zip(&other.edges)
                .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
        {
            return Err(Error::Config(
                "histograms must share bin edges for the W1 distance".into(),
            ));
        }
        let width = self.edges[1] - self.edges[0];
        let mut cum_a = 0.0;
        let mut cum_b = 0.0;
        let mut w1 = 0.0;
        for (a, b) in self.masses.iter().zip(&other.masses) {
            cum_a += a;
            cum_b += b;
            w1 += (cum_a - cum_b).abs() * width;
        }
        Ok(w1)
    }
}

/// Histogram of density values over `[lo, hi]` with `nbins` equal bins,
/// weighting each sample by the cell measure.
pub fn pushforward_histogram(
    rho: &ScalarField,
    nbins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram> {
    if nbins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if !(hi > lo) {
        return Err(Error::Config(format!(
            "histogram range must satisfy hi > lo, got [{lo}, {hi}]"
        )));
    }
    let mut counts = vec![0usize; nbins];
    let mut below = 0usize;
    let mut above = 0usize;
    let scale = nbins as f64 / (hi - lo);
    for &v in rho.values() {
        let raw = (v - lo) * scale;
        let bin = if raw < 0.0 {
            below += 1;
            0
        } else if raw >= nbins as f64 {
            if v > hi {
                above += 1;
            }
            nbins - 1
        } else {
            raw as usize
        };
        counts[bin] += 1;
    }
    let cell = rho.grid().cell_measure();
    let masses = counts.iter().map(|&c| c as f64 * cell).collect();
    let edges = (0..=nbins)
        .map(|b| lo + (hi - lo) * b as f64 / nbins as f64)
        .collect();
    Ok(Histogram {
        edges,
        masses,
        clamped_below: below,
        clamped_above: above,
    })
}

/// Verdict of the necessary-condition reachability check. A failing verdict
/// proves the two densities are not mutually reachable; a passing verdict is
/// NOT a proof of reachability (the condition is necessary, not sufficient).
#[derive(Debug, Clone, Copy)]
pub struct ReachabilityVerdict {
    pub pass: bool,
    pub mass_gap: f64,
    pub w1_gap: f64,
}

/// Compare total mass and the value distributions (pushforward measures) of
/// two densities on a shared grid.
pub fn reachability_check(
    rho_a: &ScalarField,
    rho_b: &ScalarField,
    nbins: usize,
    tol: f64,
) -> Result<ReachabilityVerdict> {
    rho_a.grid().check_same(rho_b.grid())?;
    let mass_gap = (rho_a.mass() - rho_b.mass()).abs();
    let mut lo = rho_a.min_value().min(rho_b.min_value());
    let mut hi = rho_a.max_value().max(rho_b.max_value());
    if hi - lo < 1e-300 {
        // Both fields constant with the same value.
        lo -= 0.5;
        hi += 0.5;
    }
    let ha = pushforward_histogram(rho_a, nbins, lo, hi)?;
    let hb = pushforward_histogram(rho_b, nbins, lo, hi)?;
    let w1_gap = ha.w1(&hb)?;
    Ok(ReachabilityVerdict {
        pass: mass_gap <= tol && w1_gap <= tol,
        mass_gap,
        w1_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn constant_control(vx: f64, vy: f64) -> FnControl<impl Fn(&Grid, f64) -> VectorField> {
        let speed = (vx * vx + vy * vy).sqrt();
        FnControl::new("constant", move |g: &Grid, _t| {
            VectorField::from_fn(*g, |_, _| (vx, vy))
        })
        .with_speed_bound(speed)
    }

    #[test]
    fn uniform_density_has_zero_rhs() {
        let g = Grid::square(32).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let v = presets::random_velocity(g, 5, 6, 1.0);
        let tau = continuity_rhs(&rho, &v).unwrap();
        assert!(tau.linf_norm() < 1e-12);
    }

    #[test]
    fn analytic_rhs() {
        // rho = sin y advected by (0, 1): -div(rho v) = -cos y.
        let g = Grid::square(64).unwrap();
        let rho = ScalarField::from_fn(g, |_, y| y.sin());
        let v = VectorField::from_fn(g, |_, _| (0.0, 1.0));
        let tau = continuity_rhs(&rho, &v).unwrap();
        let exact = ScalarField::from_fn(g, |_, y| -y.cos());
        assert!(tau.minus(&exact).unwrap().linf_norm() < 1e-12);
    }

    #[test]
    fn conservative_and_advective_forms_agree() {
        let g = Grid::square(64).unwrap();
        let rho = presets::random_density(g, 31, 8);
        let v = presets::random_velocity(g, 32, 8, 1.0);
        let conservative = continuity_rhs(&rho, &v).unwrap();
        // Advective form -v . grad(rho), dealiased the same way.
        let mut advective = advect_adjoint_density(&v, &rho);
        advective.scale(-1.0);
        let gap = conservative.minus(&advective).unwrap().l2_norm();
        assert!(gap < 1e-8 * conservative.l2_norm().max(1.0), "gap {gap:.3e}");
    }

    #[test]
    fn rejects_compressible_velocity() {
        let g = Grid::square(32).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let v = VectorField::from_fn(g, |x, _| (x.sin(), 0.0));
        assert!(matches!(
            continuity_rhs(&rho, &v),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn translation_solution() {
        // rho0 = sin x advected by (1, 0) for T = 1: rho_T = sin(x - 1).
        let g = Grid::square(64).unwrap();
        let rho0 = ScalarField::from_fn(g, |x, _| x.sin());
        let control = constant_control(1.0, 0.0);
        let opts = IntegrateOptions::new(1e-2).with_stride(100);
        let traj = integrate_transport(&rho0, &control, 1.0, &opts).unwrap();
        let exact = ScalarField::from_fn(g, |x, _| (x - 1.0).sin());
        let err = traj.final_snapshot().minus(&exact).unwrap().l2_norm();
        assert!(err < 1e-6, "translation L2 error {err:.3e}");
    }

    #[test]
    fn reversal_roundtrip() {
        let g = Grid::square(64).unwrap();
        let rho0 = presets::random_density(g, 41, 6);
        let control = FnControl::new("swirl", |g: &Grid, t: f64| {
            let mut v = presets::taylor_green(*g, 0.8);
            v.scale(1.0 + 0.3 * (2.0 * t).sin());
            v
        })
        .with_speed_bound(1.1);
        let opts = IntegrateOptions::new(5e-3).with_stride(1000);
        let fwd = integrate_transport(&rho0, &control, 1.0, &opts).unwrap();
        let back = integrate_transport(fwd.final_snapshot(), &control, 1.0, &opts.backward())
            .unwrap();
        let err = back.final_snapshot().minus(&rho0).unwrap().l2_norm();
        assert!(err < 1e-5, "reversal roundtrip L2 error {err:.3e}");
    }

    #[test]
    fn reparameterized_run_hits_same_state() {
        // sigma(t) = t^2 on [0, 1]: integrating tilde v(t) = 2 t v(t^2)
        // reaches the original state at sigma(1) = 1.
        let g = Grid::square(64).unwrap();
        let rho0 = presets::random_density(g, 43, 6);
        let base = |g: &Grid, t: f64| {
            let mut v = presets::taylor_green(*g, 0.6);
            v.scale(1.0 + 0.2 * t);
            v
        };
        let control = FnControl::new("base", base).with_speed_bound(0.8);
        let reparam = FnControl::new("reparam", move |g: &Grid, t: f64| {
            let mut v = base(g, t * t);
            v.scale(2.0 * t);
            v
        })
        .with_speed_bound(1.6);

        let opts = IntegrateOptions::new(2.5e-3).with_stride(10_000);
        let direct = integrate_transport(&rho0, &control, 1.0, &opts).unwrap();
        let rescaled = integrate_transport(&rho0, &reparam, 1.0, &opts).unwrap();
        let err = rescaled
            .final_snapshot()
            .minus(direct.final_snapshot())
            .unwrap()
            .l2_norm();
        assert!(err < 1e-5, "reparameterization L2 error {err:.3e}");
    }

    #[test]
    fn concatenation_matches_single_run() {
        let g = Grid::square(32).unwrap();
        let rho0 = presets::random_density(g, 47, 5);
        let control = FnControl::new("steady", |g: &Grid, _| presets::taylor_green(*g, 0.5))
            .with_speed_bound(0.5);
        let opts = IntegrateOptions::new(1e-2).with_stride(1000);
        let whole = integrate_transport(&rho0, &control, 1.0, &opts).unwrap();

        let first = integrate_transport(&rho0, &control, 0.4, &opts).unwrap();
        let shifted = FnControl::new("tail", |g: &Grid, _| presets::taylor_green(*g, 0.5))
            .with_speed_bound(0.5);
        let second =
            integrate_transport(first.final_snapshot(), &shifted, 0.6, &opts).unwrap();
        let err = second
            .final_snapshot()
            .minus(whole.final_snapshot())
            .unwrap()
            .l2_norm();
        assert!(err < 1e-10, "concatenation L2 error {err:.3e}");
    }

    #[test]
    fn zero_control_holds_state_exactly() {
        let g = Grid::square(32).unwrap();
        let rho0 = presets::random_density(g, 53, 5);
        let control = constant_control(0.0, 0.0);
        let traj =
            integrate_transport(&rho0, &control, 1.0, &IntegrateOptions::new(0.05)).unwrap();
        assert_eq!(traj.final_snapshot().values(), rho0.values());
    }

    #[test]
    fn mass_is_conserved_to_roundoff() {
        let g = Grid::square(64).unwrap();
        let rho0 = presets::random_density(g, 59, 6);
        let control = FnControl::new("rnd", |g: &Grid, _| presets::random_velocity(*g, 60, 6, 1.0))
            .with_speed_bound(1.0);
        let traj = integrate_transport(&rho0, &control, 1.0, &IntegrateOptions::new(1e-2))
            .unwrap();
        let m0 = traj.initial().mass();
        for row in trajectory_diagnostics(&traj) {
            assert!(
                (row.mass - m0).abs() <= 1e-10 * m0.abs(),
                "mass drift {:.3e} at t = {}",
                (row.mass - m0).abs(),
                row.time
            );
        }
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let g = Grid::square(32).unwrap();
        let rho0 = presets::random_density(g, 61, 4);
        let control = constant_control(10.0, 0.0);
        assert!(matches!(
            integrate_transport(&rho0, &control, 1.0, &IntegrateOptions::new(0.1)),
            Err(Error::StepSize(_))
        ));
    }

    #[test]
    fn costate_trajectory_is_forward_clock() {
        let g = Grid::square(32).unwrap();
        let lam_t = presets::random_band_limited(g, 63, 4);
        let control = FnControl::new("steady", |g: &Grid, _| presets::taylor_green(*g, 0.4))
            .with_speed_bound(0.4);
        let opts = IntegrateOptions::new(1e-2).with_stride(25);
        let traj = integrate_costate(&lam_t, &control, 1.0, &opts).unwrap();
        assert_eq!(traj.times()[0], 0.0);
        assert_eq!(*traj.times().last().unwrap(), 1.0);
        let gap = traj.final_snapshot().minus(&lam_t).unwrap().l2_norm();
        assert!(gap == 0.0, "terminal snapshot must be the terminal costate");
        // Extrema are advected invariants up to the spectral truncation
        // overshoot at this resolution.
        let (lo, hi) = (lam_t.min_value(), lam_t.max_value());
        let slack = 0.01 * (hi - lo);
        for s in traj.snapshots() {
            assert!(
                s.min_value() >= lo - slack && s.max_value() <= hi + slack,
                "extrema [{}, {}] escaped [{lo}, {hi}]",
                s.min_value(),
                s.max_value()
            );
        }
    }

    #[test]
    fn histogram_masses_sum_to_domain_measure() {
        let g = Grid::square(64).unwrap();
        let rho = presets::random_density(g, 71, 6);
        let h = pushforward_histogram(&rho, 32, 0.0, 2.0).unwrap();
        let total = h.total_mass();
        let expect = g.total_measure();
        assert!(
            (total - expect).abs() <= 1e-12 * expect,
            "total mass {total} vs domain measure {expect}"
        );
    }

    #[test]
    fn constant_field_fills_one_bin() {
        let g = Grid::square(16).unwrap();
        let rho = ScalarField::constant(g, 0.7);
        let h = pushforward_histogram(&rho, 10, 0.0, 1.0).unwrap();
        let nonzero: Vec<usize> = h
            .masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![7]);
        assert!((h.masses()[7] - g.total_measure()).abs() < 1e-12 * g.total_measure());
    }

    #[test]
    fn two_level_field_splits_evenly() {
        let g = Grid::square(32).unwrap();
        let rho = ScalarField::from_fn(g, |x, _| if x < std::f64::consts::PI { 0.0 } else { 1.0 });
        let h = pushforward_histogram(&rho, 2, -0.25, 1.25).unwrap();
        let half = 2.0 * std::f64::consts::PI.powi(2);
        assert!((h.masses()[0] - half).abs() < 1e-12 * half);
        assert!((h.masses()[1] - half).abs() < 1e-12 * half);
    }

    #[test]
    fn reachability_identity_and_translate_pass() {
        let g = Grid::square(32).unwrap();
        let rho = presets::stripe(g, 0.0);
        let same = reachability_check(&rho, &rho, 64, 1e-12).unwrap();
        assert!(same.pass && same.mass_gap == 0.0 && same.w1_gap == 0.0);

        // Grid-aligned translate: the value multiset is identical.
        let shifted = presets::stripe(g, 8.0 * g.dx());
        let verdict = reachability_check(&rho, &shifted, 64, 1e-12).unwrap();
        assert!(
            verdict.pass,
            "translate should pass: mass gap {:.3e}, w1 gap {:.3e}",
            verdict.mass_gap, verdict.w1_gap
        );
        assert_eq!(verdict.w1_gap, 0.0);
    }

    #[test]
    fn value_rescaled_density_fails() {
        let g = Grid::square(32).unwrap();
        let rho = presets::stripe(g, 0.0);
        let doubled = rho.scaled(2.0);
        let verdict = reachability_check(&rho, &doubled, 64, 1e-9).unwrap();
        assert!(!verdict.pass);
        assert!(verdict.w1_gap > 0.0);
    }
}

//! Adjoint gradient descent for the penalized mixing objective
//!
//! ```text
//! J(v) = int_0^T |K v_t|^2 dt + alpha * d^2(rho_T, rho_star)
//! ```
//!
//! over piecewise-linear control paths, plus penalty continuation for the
//! state-transfer problem and the geodesic diagnostics.
//!
//! The gradient is the exact discrete adjoint of the forward map (cost and
//! gradient share one discretization): the RK4 advection sweep is transposed
//! stage by stage, the accumulated velocity bars are scattered back onto the
//! control nodes through the interpolation weights, and the effort term
//! contributes `2 w_n K*K v_n` per node. The streamfunction component of the
//! gradient is the scalar-curl pullback `d(g_x)/dy - d(g_y)/dx`, which
//! annihilates pure-gradient parts (the projection onto divergence-free
//! fields is implicit); the mean-flow component is the constant part of the
//! velocity gradient.

use crate::control::{ControlDirection, ControlPath};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::helmholtz::{self, EPS_DENSITY};
use crate::metrics::{self, MetricKind, NormKind};
use crate::spectral;
use crate::transport::{
    advect_adjoint_density, advect_adjoint_velocity, advect_rhs, integrate_costate,
    integrate_transport, rk4_advect, DensityTrajectory, IntegrateOptions, CFL_SAFETY,
};

/// Problem data for one penalized mixing solve.
#[derive(Debug, Clone)]
pub struct MixingProblemSpec {
    pub rho_initial: ScalarField,
    pub rho_target: ScalarField,
    /// Trade-off weight on the terminal mixedness penalty.
    pub alpha: f64,
    pub horizon: f64,
    /// Number of control intervals (nodes = intervals + 1).
    pub intervals: usize,
    pub norm: NormKind,
    pub metric: MetricKind,
    /// Requested integrator step; rounded down so steps align with nodes.
    pub dt: f64,
}

impl MixingProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rho_initial: ScalarField,
        rho_target: ScalarField,
        alpha: f64,
        horizon: f64,
        intervals: usize,
        norm: NormKind,
        metric: MetricKind,
        dt: f64,
    ) -> Result<Self> {
        rho_initial.grid().check_same(rho_target.grid())?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be nonnegative, got {alpha}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if intervals == 0 {
            return Err(Error::Config("need at least one control interval".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if rho_initial.min_value() < EPS_DENSITY {
            return Err(Error::Degenerate(format!(
                "initial density minimum {:.3e} below floor {EPS_DENSITY:.1e}",
                rho_initial.min_value()
            )));
        }
        let mass_gap = (rho_initial.mass() - rho_target.mass()).abs();
        if mass_gap > 1e-10 * rho_initial.mass().abs().max(1.0) {
            return Err(Error::Config(format!(
                "initial and target masses differ by {mass_gap:.3e}; mass is conserved, so the \
                 penalty would have a floor"
            )));
        }
        Ok(Self {
            rho_initial,
            rho_target,
            alpha,
            horizon,
            intervals,
            norm,
            metric,
            dt,
        })
    }

    pub fn grid(&self) -> &crate::grid::Grid {
        self.rho_initial.grid()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Steps per control interval and the aligned step size.
    pub fn time_grid(&self) -> (usize, f64) {
        let h = self.horizon / self.intervals as f64;
        let per = ((h / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (per, h / per as f64)
    }

    pub fn zero_control(&self) -> ControlPath {
        ControlPath::zero(*self.grid(), self.intervals, self.horizon)
            .expect("validated in the constructor")
    }

    fn check_control(&self, control: &ControlPath) -> Result<()> {
        self.grid().check_same(control.grid())?;
        if control.intervals() != self.intervals
            || (control.horizon() - self.horizon).abs() > 1e-12 * self.horizon
        {
            return Err(Error::Config(format!(
                "control discretization ({} intervals over {}) does not match the problem \
                 ({} over {})",
                control.intervals(),
                control.horizon(),
                self.intervals,
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Cost value split into its parts.
#[derive(Debug, Clone)]
pub struct MixingCost {
    pub total: f64,
    pub effort: f64,
    pub penalty: f64,
    pub rho_final: ScalarField,
}

/// Forward sweep shared by cost and gradient: states at every step boundary
/// and velocities at every half step.
struct ForwardSweep {
    states: Vec<ScalarField>,
    /// Velocity at time `k * dt / 2` for `k = 0..=2*n_steps`.
    velocities: Vec<VectorField>,
    dt: f64,
}

fn forward_sweep(control: &ControlPath, spec: &MixingProblemSpec) -> Result<ForwardSweep> {
    let grid = *spec.grid();
    let (per, dt) = spec.time_grid();
    let n_steps = per * spec.intervals;
    let vmax = control.max_node_speed();
    let h = grid.dx().min(grid.dy());
    if vmax > 0.0 && dt > CFL_SAFETY * h / vmax {
        return Err(Error::StepSize(format!(
            "dt = {dt:.3e} exceeds CFL bound {:.3e} at max control speed {vmax:.3e}",
            CFL_SAFETY * h / vmax
        )));
    }

    let mut velocities = Vec::with_capacity(2 * n_steps + 1);
    for k in 0..=2 * n_steps {
        velocities.push(control.velocity_at(k as f64 * dt / 2.0));
    }

    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(spec.rho_initial.clone());
    for m in 0..n_steps {
        let next = rk4_advect(
            &states[m],
            &velocities[2 * m],
            &velocities[2 * m + 1],
            &velocities[2 * m + 2],
            dt,
        );
        if !next.is_finite() {
            return Err(Error::Diverged { time: m as f64 * dt });
        }
        states.push(next);
    }
    Ok(ForwardSweep {
        states,
        velocities,
        dt,
    })
}

fn cost_from_sweep(
    control: &ControlPath,
    spec: &MixingProblemSpec,
    sweep: &ForwardSweep,
) -> Result<MixingCost> {
    let effort = control.effort(spec.norm);
    let rho_final = sweep.states.last().expect("nonempty").clone();
    let gap = metrics::mix_distance(&rho_final, &spec.rho_target, spec.metric)?;
    let penalty = spec.alpha * gap * gap;
    Ok(MixingCost {
        total: effort + penalty,
        effort,
        penalty,
        rho_final,
    })
}

/// Evaluate the objective for one control.
pub fn mixing_cost(control: &ControlPath, spec: &MixingProblemSpec) -> Result<MixingCost> {
    spec.check_control(control)?;
    let sweep = forward_sweep(control, spec)?;
    cost_from_sweep(control, spec, &sweep)
}

/// Gradient of the objective with the cost evaluated on the same sweep.
#[derive(Debug, Clone)]
pub struct MixingGradient {
    /// Per-node streamfunction and mean-flow gradients.
    pub direction: ControlDirection,
    /// Per-node transport term of the optimality system (the discrete
    /// counterpart of `rho grad lambda` at the node).
    pub transport_term: Vec<VectorField>,
    pub cost: MixingCost,
}

/// Exact discrete adjoint of `mixing_cost` in the control.
pub fn mixing_gradient(control: &ControlPath, spec: &MixingProblemSpec) -> Result<MixingGradient> {
    spec.check_control(control)?;
    let grid = *spec.grid();
    let sweep = forward_sweep(control, spec)?;
    let cost = cost_from_sweep(control, spec, &sweep)?;
    let n_steps = sweep.states.len() - 1;
    let dt = sweep.dt;

    // Terminal seed: d(penalty)/d(rho_T).
    let mut rho_bar =
        metrics::mix_distance_gradient(&cost.rho_final, &spec.rho_target, spec.metric)?;
    rho_bar.scale(spec.alpha);

    // Velocity bars at the half-step slots.
    let mut v_bars: Vec<VectorField> = vec![VectorField::zeros(grid); 2 * n_steps + 1];

    for m in (0..n_steps).rev() {
        let rho_m = &sweep.states[m];
        let v1 = &sweep.velocities[2 * m];
        let v2 = &sweep.velocities[2 * m + 1];
        let v4 = &sweep.velocities[2 * m + 2];

        // Recompute the stage states of the forward step.
        let k1 = advect_rhs(rho_m, v1);
        let mut s2 = rho_m.clone();
        s2.axpy(0.5 * dt, &k1);
        let k2 = advect_rhs(&s2, v2);
        let mut s3 = rho_m.clone();
        s3.axpy(0.5 * dt, &k2);
        let k3 = advect_rhs(&s3, v2);
        let mut s4 = rho_m.clone();
        s4.axpy(dt, &k3);

        let out_bar = rho_bar.clone();
        let mut new_bar = out_bar.clone();

        // Stage 4: k4 = f(s4, v4), weight dt/6.
        let k4_bar = out_bar.scaled(dt / 6.0);
        let a4 = advect_adjoint_density(v4, &k4_bar);
        new_bar.axpy(1.0, &a4);
        v_bars[2 * m + 2].axpy(1.0, &advect_adjoint_velocity(&s4, &k4_bar));

        // Stage 3: k3 = f(s3, v2), weight dt/3 plus dt * a4 through s4.
        let mut k3_bar = out_bar.scaled(dt / 3.0);
        k3_bar.axpy(dt, &a4);
        let a3 = advect_adjoint_density(v2, &k3_bar);
        new_bar.axpy(1.0, &a3);
        v_bars[2 * m + 1].axpy(1.0, &advect_adjoint_velocity(&s3, &k3_bar));

        // Stage 2: k2 = f(s2, v2), weight dt/3 plus dt/2 * a3 through s3.
        let mut k2_bar = out_bar.scaled(dt / 3.0);
        k2_bar.axpy(0.5 * dt, &a3);
        let a2 = advect_adjoint_density(v2, &k2_bar);
        new_bar.axpy(1.0, &a2);
        v_bars[2 * m + 1].axpy(1.0, &advect_adjoint_velocity(&s2, &k2_bar));

        // Stage 1: k1 = f(rho_m, v1), weight dt/6 plus dt/2 * a2 through s2.
        let mut k1_bar = out_bar.scaled(dt / 6.0);
        k1_bar.axpy(0.5 * dt, &a2);
        let a1 = advect_adjoint_density(v1, &k1_bar);
        new_bar.axpy(1.0, &a1);
        v_bars[2 * m].axpy(1.0, &advect_adjoint_velocity(rho_m, &k1_bar));

        rho_bar = new_bar;
    }

    // Scatter the half-step bars onto the nodes through the interpolation
    // weights, add the effort gradient, and pull back.
    let nodes = control.node_count();
    let mut node_bars: Vec<VectorField> = vec![VectorField::zeros(grid); nodes];
    for (k, bar) in v_bars.iter().enumerate() {
        let t = k as f64 * dt / 2.0;
        for (n, w) in control.interp_weights(t) {
            node_bars[n].axpy(w, bar);
        }
    }

    let mut direction = ControlDirection::zeros_like(control);
    let mut transport_term = Vec::with_capacity(nodes);
    for n in 0..nodes {
        let w_n = control.node_weight(n);
        let v_n = control.node_velocity(n);
        let mut total = spectral::apply_multiplier_vec(&v_n, spec.norm.kk_multiplier());
        total.scale(2.0 * w_n);
        total.axpy(1.0, &node_bars[n]);

        // g_psi = d(g_x)/dy - d(g_y)/dx.
        let mut g_psi = spectral::scalar_curl(&total);
        g_psi.scale(-1.0);
        direction.psi[n] = g_psi;
        direction.mean_flow[n] = total.mean_components();

        // Discrete counterpart of rho grad(lambda) at the node.
        let mut term = node_bars[n].clone();
        term.scale(-1.0 / w_n);
        transport_term.push(term);
    }

    Ok(MixingGradient {
        direction,
        transport_term,
        cost,
    })
}

/// Gradient-descent options (Armijo backtracking line search).
#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Relative gradient-norm tolerance: stop when
    /// `|g| <= grad_tol * max(1, |g_0|)`.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub initial_step: f64,
    pub step_grow: f64,
    pub max_halvings: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            initial_step: 1.0,
            step_grow: 1.5,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimStatus {
    /// Gradient norm dropped below tolerance.
    Converged,
    MaxIters,
    /// Line search failed to find a decrease.
    Stalled,
    /// Not an optimization outcome: the result was produced by
    /// `evaluate_control` on a fixed control.
    Evaluated,
}

impl OptimStatus {
    pub fn name(&self) -> &'static str {
        match self {
            OptimStatus::Converged => "converged",
            OptimStatus::MaxIters => "max-iters",
            OptimStatus::Stalled => "stalled",
            OptimStatus::Evaluated => "evaluated",
        }
    }
}

/// One row of the optimization log.
#[derive(Debug, Clone, Copy)]
pub struct IterationRow {
    pub iter: usize,
    pub total: f64,
    pub effort: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerResult {
    pub control: ControlPath,
    pub density_trajectory: DensityTrajectory,
    /// Costate advected backward from the terminal condition, stored at the
    /// node times in the forward clock.
    pub costate_trajectory: DensityTrajectory,
    pub history: Vec<IterationRow>,
    /// Per-node relative stationarity residual
    /// `|leray(2 K*K v_n - rho_n grad lambda_n)| / |2 K*K v_n|`.
    pub stationarity: Vec<f64>,
    pub status: OptimStatus,
    pub cost: MixingCost,
    pub grad_norm: f64,
}

/// Preconditioned descent direction: the effort block of the Hessian is
/// `2 w m(k) |k|^2` on streamfunctions, so dividing each mode by
/// `m(k) |k|^2` makes that block well conditioned for every norm kind. The
/// mean-flow block is already well scaled.
fn precondition(g: &ControlDirection, norm: NormKind) -> ControlDirection {
    let mult = norm.kk_multiplier();
    let mut out = g.clone();
    for psi in out.psi.iter_mut() {
        let mut hat = spectral::transform(psi);
        hat.apply_factors(|kx, ky| {
            let k2 = kx * kx + ky * ky;
            let m = mult.factor(k2);
            if k2 == 0.0 || m == 0.0 {
                0.0
            } else {
                1.0 / (m * k2)
            }
        });
        *psi = spectral::inverse_transform(&hat);
    }
    out
}

/// Solve the penalized mixing problem by preconditioned gradient descent
/// from the zero control.
pub fn optimize_mixing(spec: &MixingProblemSpec, opts: &OptimizeOptions) -> Result<OptimizerResult> {
    optimize_mixing_from(spec, spec.zero_control(), opts)
}

/// Evaluate cost, trajectories, and diagnostics for a fixed control without
/// optimizing (status `Evaluated`).
pub fn evaluate_control(spec: &MixingProblemSpec, control: ControlPath) -> Result<OptimizerResult> {
    spec.check_control(&control)?;
    let grid = *spec.grid();
    let eval = mixing_gradient(&control, spec)?;
    let precond = precondition(&eval.direction, spec.norm);
    let grad_norm = eval.direction.pairing(&precond, &grid).max(0.0).sqrt();
    let history = vec![IterationRow {
        iter: 0,
        total: eval.cost.total,
        effort: eval.cost.effort,
        penalty: eval.cost.penalty,
        grad_norm,
        step: 0.0,
    }];
    finalize(spec, control, history, eval, grad_norm, OptimStatus::Evaluated)
}

/// Same, warm-started from `control0` (used by the penalty continuation).
pub fn optimize_mixing_from(
    spec: &MixingProblemSpec,
    control0: ControlPath,
    opts: &OptimizeOptions,
) -> Result<OptimizerResult> {
    spec.check_control(&control0)?;
    let grid = *spec.grid();
    let mut control = control0;
    let mut eval = mixing_gradient(&control, spec)?;
    let mut precond = precondition(&eval.direction, spec.norm);
    // Descent rate <g, P g>; its square root is the reported gradient norm.
    let mut rate = eval.direction.pairing(&precond, &grid).max(0.0);
    let g0 = rate.sqrt();
    let mut history = vec![IterationRow {
        iter: 0,
        total: eval.cost.total,
        effort: eval.cost.effort,
        penalty: eval.cost.penalty,
        grad_norm: g0,
        step: 0.0,
    }];

    let mut status = OptimStatus::MaxIters;
    let mut step = opts.initial_step;
    let threshold = |g0: f64| opts.grad_tol * g0.max(1.0);

    if g0 <= threshold(g0) {
        status = OptimStatus::Converged;
        return finalize(spec, control, history, eval, g0, status);
    }

    for iter in 1..=opts.max_iters {
        // Line search along the negative preconditioned gradient.
        let mut accepted = false;
        let mut halvings = 0;
        while halvings <= opts.max_halvings {
            let mut trial = control.clone();
            trial.apply_step(-step, &precond);
            match mixing_cost(&trial, spec) {
                Ok(trial_cost) => {
                    if trial_cost.total <= eval.cost.total - opts.armijo_c1 * step * rate {
                        control = trial;
                        accepted = true;
                        break;
                    }
                }
                // CFL violations and blow-ups reject the step.
                Err(Error::StepSize(_)) | Err(Error::Diverged { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            halvings += 1;
        }
        if !accepted {
            status = OptimStatus::Stalled;
            break;
        }

        eval = mixing_gradient(&control, spec)?;
        precond = precondition(&eval.direction, spec.norm);
        rate = eval.direction.pairing(&precond, &grid).max(0.0);
        let gnorm = rate.sqrt();
        history.push(IterationRow {
            iter,
            total: eval.cost.total,
            effort: eval.cost.effort,
            penalty: eval.cost.penalty,
            grad_norm: gnorm,
            step,
        });
        if gnorm <= threshold(g0) {
            status = OptimStatus::Converged;
            break;
        }
        step *= opts.step_grow;
    }

    let grad_norm = history.last().expect("nonempty").grad_norm;
    finalize(spec, control, history, eval, grad_norm, status)
}

fn finalize(
    spec: &MixingProblemSpec,
    control: ControlPath,
    history: Vec<IterationRow>,
    eval: MixingGradient,
    grad_norm: f64,
    status: OptimStatus,
) -> Result<OptimizerResult> {
    let (per, dt) = spec.time_grid();
    let opts = IntegrateOptions::new(dt).with_stride(per);
    let density_trajectory =
        integrate_transport(&spec.rho_initial, &control, spec.horizon, &opts)?;

    let mut lambda_t = metrics::mix_distance_gradient(
        density_trajectory.final_snapshot(),
        &spec.rho_target,
        spec.metric,
    )?;
    lambda_t.scale(-spec.alpha);
    let costate_trajectory = integrate_costate(&lambda_t, &control, spec.horizon, &opts)?;

    // Stationarity per node from the discrete transport term.
    let stationarity = (0..control.node_count())
        .map(|n| {
            let v_n = control.node_velocity(n);
            let mut field = spectral::apply_multiplier_vec(&v_n, spec.norm.kk_multiplier());
            field.scale(2.0);
            let denom = field.l2_norm();
            field.axpy(-1.0, &eval.transport_term[n]);
            let num = helmholtz::leray_project(&field).l2_norm();
            if denom < 1e-14 {
                if num < 1e-12 {
                    0.0
                } else {
                    num
                }
            } else {
                num / denom
            }
        })
        .collect();

    Ok(OptimizerResult {
        control,
        density_trajectory,
        costate_trajectory,
        history,
        stationarity,
        status,
        cost: eval.cost,
        grad_norm,
    })
}

/// Options for the penalty continuation over increasing alpha.
#[derive(Debug, Clone)]
pub struct TransferOptions {
    pub alpha0: f64,
    /// Number of continuation stages; stage `k` uses `alpha0 * 10^k`.
    pub stages: usize,
    /// Stop once `d(rho_T, rho_f) <= gap_tol`.
    pub gap_tol: f64,
    pub reach_bins: usize,
    /// Tolerance for the reachability pre-check; `None` scales it to one
    /// histogram bin of mass (the resolution limit of the discrete
    /// pushforward for smooth, non-grid-aligned data).
    pub reach_tol: Option<f64>,
    /// Proceed even if the reachability necessary condition fails.
    pub force: bool,
    pub inner: OptimizeOptions,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            alpha0: 10.0,
            stages: 5,
            gap_tol: 0.05,
            reach_bins: 64,
            reach_tol: None,
            force: false,
            inner: OptimizeOptions::default(),
        }
    }
}

/// One continuation stage record.
#[derive(Debug, Clone, Copy)]
pub struct TransferStage {
    pub alpha: f64,
    pub cost: f64,
    pub effort: f64,
    pub gap: f64,
}

/// Upper-bound estimate of the transfer cost between two densities. The
/// square root of the achieved effort of a control whose endpoint gap is
/// within tolerance; never a lower bound, and no claim when no stage reached
/// the tolerance (`feasible_within_tol = false`).
#[derive(Debug, Clone)]
pub struct TransferEstimate {
    pub m_upper: f64,
    pub endpoint_gap: f64,
    pub history: Vec<TransferStage>,
    pub feasible_within_tol: bool,
    pub result: OptimizerResult,
}

/// Estimate the optimal state-transfer cost from `rho_i` to `rho_f` on the
/// unit horizon by penalty continuation: solve the penalized problem for a
/// growing schedule of alphas, warm-starting each stage from the previous
/// control. Errors unless the pushforward necessary condition passes (or
/// `force` is set).
pub fn transfer_continuation(
    rho_i: &ScalarField,
    rho_f: &ScalarField,
    intervals: usize,
    dt: f64,
    norm: NormKind,
    metric: MetricKind,
    opts: &TransferOptions,
) -> Result<TransferEstimate> {
    let reach_tol = opts.reach_tol.unwrap_or_else(|| {
        let lo = rho_i.min_value().min(rho_f.min_value());
        let hi = rho_i.max_value().max(rho_f.max_value());
        rho_i.grid().total_measure() * (hi - lo).max(1e-12) / opts.reach_bins as f64
    });
    let verdict = crate::transport::reachability_check(rho_i, rho_f, opts.reach_bins, reach_tol)?;
    if !verdict.pass && !opts.force {
        return Err(Error::ConstraintViolation(format!(
            "pushforward necessary condition failed (mass gap {:.3e}, w1 gap {:.3e}); the \
             transfer cost may be infinite. Pass force to attempt anyway",
            verdict.mass_gap, verdict.w1_gap
        )));
    }

    let base = MixingProblemSpec::new(
        rho_i.clone(),
        rho_f.clone(),
        opts.alpha0,
        1.0,
        intervals,
        norm,
        metric,
        dt,
    )?;

    let mut control = base.zero_control();
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, OptimizerResult)> = None; // (gap, effort, result)
    for k in 0..opts.stages.max(1) {
        let alpha = opts.alpha0 * 10f64.powi(k as i32);
        let spec = base.clone().with_alpha(alpha);
        let result = optimize_mixing_from(&spec, control.clone(), &opts.inner)?;
        let gap = metrics::mix_distance(&result.cost.rho_final, rho_f, metric)?;
        let effort = result.cost.effort;
        history.push(TransferStage {
            alpha,
            cost: result.cost.total,
            effort,
            gap,
        });
        control = result.control.clone();
        let better = match &best {
            None => true,
            Some((best_gap, ..)) => gap < *best_gap,
        };
        if better {
            best = Some((gap, effort, result));
        }
        if gap <= opts.gap_tol {
            break;
        }
    }

    let (gap, effort, result) = best.expect("at least one stage ran");
    Ok(TransferEstimate {
        m_upper: effort.max(0.0).sqrt(),
        endpoint_gap: gap,
        feasible_within_tol: gap <= opts.gap_tol,
        history,
        result,
    })
}

/// Geodesic diagnostics of a solve: node speeds and their coefficient of
/// variation, the stationarity series, and (for the kinetic-energy norm) the
/// Euler residual of the control trajectory.
#[derive(Debug, Clone)]
pub struct GeodesicReport {
    pub speeds: Vec<f64>,
    pub speed_cv: f64,
    pub stationarity: Vec<f64>,
    pub euler_residual: Option<Vec<(f64, f64)>>,
    pub max_euler_residual: Option<f64>,
}

pub fn geodesic_diagnostics(result: &OptimizerResult, norm: NormKind) -> Result<GeodesicReport> {
    let control = &result.control;
    let speeds: Vec<f64> = (0..control.node_count())
        .map(|n| metrics::control_norm(&control.node_velocity(n), norm))
        .collect();
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let speed_cv = if mean < 1e-12 {
        0.0
    } else {
        let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / speeds.len() as f64;
        var.sqrt() / mean
    };

    let (euler_residual, max_euler_residual) = if norm == NormKind::L2 && control.node_count() >= 3
    {
        let times = control.node_times();
        let velocities: Vec<VectorField> = (0..control.node_count())
            .map(|n| control.node_velocity(n))
            .collect();
        let traj = crate::euler::VelocityTrajectory::from_velocities(times, velocities)?;
        let series = crate::euler::euler_residual(&traj)?;
        let max = series.iter().fold(0.0f64, |m, (_, r)| m.max(*r));
        (Some(series), Some(max))
    } else {
        (None, None)
    };

    Ok(GeodesicReport {
        speeds,
        speed_cv,
        stationarity: result.stationarity.clone(),
        euler_residual,
        max_euler_residual,
    })
}

//! Incompressible Euler flow in vorticity-streamfunction form, and the
//! residual evaluator that certifies a velocity trajectory as an Euler flow.
//!
//! In 2D the momentum equation `dv/dt + (grad v) v = grad p`, `div v = 0`
//! is equivalent to advecting the scalar vorticity: `dw/dt + v . grad w = 0`
//! with `v = perp_grad(laplacian^{-1} w)` plus a conserved mean flow (the
//! vorticity determines the velocity only up to a constant on the torus).
//! Divergence-freeness is exact by construction; pressure is eliminated and
//! recoverable on demand.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::helmholtz;
use crate::spectral;
use crate::transport::CFL_SAFETY;

/// Velocity/vorticity snapshots along one Euler integration.
#[derive(Debug, Clone)]
pub struct VelocityTrajectory {
    times: Vec<f64>,
    velocities: Vec<VectorField>,
    vorticities: Vec<ScalarField>,
}

impl VelocityTrajectory {
    pub fn new(
        times: Vec<f64>,
        velocities: Vec<VectorField>,
        vorticities: Vec<ScalarField>,
    ) -> Result<Self> {
        if times.len() != velocities.len() || times.len() != vorticities.len() || times.is_empty()
        {
            return Err(Error::Config(
                "velocity trajectory needs matching, nonempty series".into(),
            ));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config("times must be strictly increasing".into()));
        }
        Ok(Self {
            times,
            velocities,
            vorticities,
        })
    }

    /// Build from velocity snapshots alone, computing vorticities.
    pub fn from_velocities(times: Vec<f64>, velocities: Vec<VectorField>) -> Result<Self> {
        let vorticities = velocities.iter().map(spectral::scalar_curl).collect();
        Self::new(times, velocities, vorticities)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn velocities(&self) -> &[VectorField] {
        &self.velocities
    }

    pub fn vorticities(&self) -> &[ScalarField] {
        &self.vorticities
    }

    pub fn grid(&self) -> &Grid {
        self.velocities[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_velocity(&self) -> &VectorField {
        self.velocities.last().expect("nonempty")
    }
}

/// Streamfunction reconstruction `v = perp_grad(laplacian^{-1} w) + mean`.
fn velocity_from_vorticity(omega: &ScalarField, mean: [f64; 2]) -> VectorField {
    let psi = spectral::laplacian_inverse(omega);
    let mut v = spectral::perp_gradient(&psi);
    v.shift(mean);
    v
}

/// `-dealias(v . grad w)`: vorticity advection right-hand side.
fn vorticity_rhs(omega: &ScalarField, mean: [f64; 2]) -> ScalarField {
    let v = velocity_from_vorticity(omega, mean);
    let grad = spectral::gradient(omega);
    let mut dot = v.x().pointwise_mul(grad.x());
    dot.axpy(1.0, &v.y().pointwise_mul(grad.y()));
    let mut out = spectral::dealias(&dot);
    out.scale(-1.0);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct EulerOptions {
    pub dt: f64,
    pub stride: usize,
}

impl EulerOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }
}

/// Integrate the incompressible Euler equation from `v0` over `[0, horizon]`.
///
/// `v0` is Leray-projected first; its mean flow is carried separately and is
/// conserved exactly. The vorticity is dealiased at initialization and the
/// quadratic term is dealiased every stage, so energy and enstrophy are
/// conserved by the semi-discrete system and drift only through the RK4
/// time error.
pub fn integrate_euler(
    v0: &VectorField,
    horizon: f64,
    opts: &EulerOptions,
) -> Result<VelocityTrajectory> {
    let grid = *v0.grid();
    if !v0.is_finite() {
        return Err(Error::Config("initial velocity has non-finite values".into()));
    }
    let v0 = helmholtz::leray_project(v0);
    let mean = v0.mean_components();
    let mut omega = spectral::dealias(&spectral::scalar_curl(&v0));

    let (n_steps, dt) = plan(horizon, opts.dt)?;
    let vmax = v0.max_speed();
    let h = grid.dx().min(grid.dy());
    if vmax > 0.0 && dt > CFL_SAFETY * h / vmax {
        return Err(Error::StepSize(format!(
            "dt = {dt:.3e} exceeds CFL bound {:.3e} for the initial speed {vmax:.3e}",
            CFL_SAFETY * h / vmax
        )));
    }

    let mut times = vec![0.0];
    let mut velocities = vec![velocity_from_vorticity(&omega, mean)];
    let mut vorticities = vec![omega.clone()];

    for step in 0..n_steps {
        let k1 = vorticity_rhs(&omega, mean);
        let mut s = omega.clone();
        s.axpy(0.5 * dt, &k1);
        let k2 = vorticity_rhs(&s, mean);
        let mut s = omega.clone();
        s.axpy(0.5 * dt, &k2);
        let k3 = vorticity_rhs(&s, mean);
        let mut s = omega.clone();
        s.axpy(dt, &k3);
        let k4 = vorticity_rhs(&s, mean);
        omega.axpy(dt / 6.0, &k1);
        omega.axpy(dt / 3.0, &k2);
        omega.axpy(dt / 3.0, &k3);
        omega.axpy(dt / 6.0, &k4);

        if !omega.is_finite() {
            return Err(Error::Diverged {
                time: step as f64 * dt,
            });
        }
        if (step + 1) % opts.stride == 0 || step + 1 == n_steps {
            times.push((step + 1) as f64 * dt);
            velocities.push(velocity_from_vorticity(&omega, mean));
            vorticities.push(omega.clone());
        }
    }

    VelocityTrajectory::new(times, velocities, vorticities)
}

fn plan(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!(
            "invalid horizon {horizon} or dt {dt}"
        )));
    }
    let n = (horizon / dt - 1e-12).ceil().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

/// Dealiased convective term `(v . grad) v`.
pub(crate) fn convective_term(v: &VectorField) -> VectorField {
    let vd = spectral::dealias_vec(v);
    let comp = |c: &ScalarField| {
        let g = spectral::gradient(c);
        let mut dot = vd.x().pointwise_mul(g.x());
        dot.axpy(1.0, &vd.y().pointwise_mul(g.y()));
        spectral::dealias(&dot)
    };
    VectorField::from_components(comp(vd.x()), comp(vd.y())).expect("components share a grid")
}

/// Per-time normalized Euler residual
/// `|leray(dv/dt + (grad v) v)| / max(|v|^2, eps)`, with `dv/dt` by centered
/// differences on the stored snapshots. Near-zero residual certifies the
/// trajectory as an Euler flow up to discretization order: the projector
/// removes any pressure gradient.
pub fn euler_residual(traj: &VelocityTrajectory) -> Result<Vec<(f64, f64)>> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::Config(
            "euler residual needs at least 3 snapshots".into(),
        ));
    }
    let dt0 = traj.times[1] - traj.times[0];
    for w in traj.times.windows(2) {
        if ((w[1] - w[0]) - dt0).abs() > 1e-9 * dt0 {
            return Err(Error::Config(
                "euler residual needs a uniform snapshot stride".into(),
            ));
        }
    }
    let eps = 1e-12;
    let mut out = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let v = &traj.velocities[i];
        let mut accel = traj.velocities[i + 1].minus(&traj.velocities[i - 1])?;
        accel.scale(1.0 / (2.0 * dt0));
        accel.axpy(1.0, &convective_term(v));
        let r = helmholtz::leray_project(&accel).l2_norm() / v.l2_norm().powi(2).max(eps);
        out.push((traj.times[i], r));
    }
    Ok(out)
}

/// Kinetic energy `|v|^2 / 2`, enstrophy `|w|^2 / 2`, and vorticity extrema
/// per stored time.
#[derive(Debug, Clone, Copy)]
pub struct EnergyRow {
    pub time: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

pub fn energy_series(traj: &VelocityTrajectory) -> Vec<EnergyRow> {
    traj.times
        .iter()
        .zip(traj.velocities.iter().zip(&traj.vorticities))
        .map(|(&time, (v, w))| EnergyRow {
            time,
            energy: 0.5 * v.l2_norm().powi(2),
            enstrophy: 0.5 * w.l2_norm().powi(2),
            omega_min: w.min_value(),
            omega_max: w.max_value(),
        })
        .collect()
}

/// Pressure diagnostic: solve `laplacian p = div((grad v) v)` for the
/// zero-mean pressure consistent with the momentum balance.
pub fn pressure_diagnostic(v: &VectorField) -> ScalarField {
    let adv = convective_term(v);
    spectral::laplacian_inverse(&spectral::divergence(&adv))
}

/// Trajectory invariant checks used by tests and the CLI: divergence-free
/// velocities and streamfunction-consistent snapshots.
pub fn consistency_residuals(traj: &VelocityTrajectory) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(traj.velocities.iter().zip(&traj.vorticities))
        .map(|(&t, (v, w))| {
            let div = spectral::divergence(v).l2_norm() / v.l2_norm().max(1e-300);
            let recon = velocity_from_vorticity(w, v.mean_components());
            let gap = recon.minus(v).expect("same grid").l2_norm() / v.l2_norm().max(1e-300);
            (t, div.max(gap))
        })
        .collect()
}

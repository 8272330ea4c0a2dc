//! Time-discretized divergence-free controls.
//!
//! A control is stored as one streamfunction per uniformly spaced node plus a
//! constant mean-flow vector per node, interpolated piecewise-linearly in
//! time. On the torus every divergence-free field is a perpendicular
//! gradient plus a constant, so this parameterization is complete and the
//! incompressibility constraint holds exactly by construction. The
//! streamfunctions carry the gauge `mean(psi) = 0`.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::metrics::{control_norm_sq, NormKind};
use crate::spectral;
use crate::transport::Control;

#[derive(Debug, Clone)]
pub struct ControlPath {
    grid: Grid,
    horizon: f64,
    /// One zero-mean streamfunction per node.
    psi: Vec<ScalarField>,
    /// Constant (harmonic) velocity component per node.
    mean_flow: Vec<[f64; 2]>,
}

impl ControlPath {
    /// Zero control with `intervals >= 1` uniform intervals on `[0, horizon]`.
    pub fn zero(grid: Grid, intervals: usize, horizon: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Config("control needs at least one interval".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!(
                "control horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            grid,
            horizon,
            psi: vec![ScalarField::zeros(grid); intervals + 1],
            mean_flow: vec![[0.0; 2]; intervals + 1],
        })
    }

    /// Constant-in-time uniform flow.
    pub fn constant_flow(
        grid: Grid,
        intervals: usize,
        horizon: f64,
        flow: [f64; 2],
    ) -> Result<Self> {
        let mut path = Self::zero(grid, intervals, horizon)?;
        for m in path.mean_flow.iter_mut() {
            *m = flow;
        }
        Ok(path)
    }

    /// Build from explicit node data. Streamfunction means are removed
    /// (gauge fixing).
    pub fn from_parts(
        grid: Grid,
        horizon: f64,
        mut psi: Vec<ScalarField>,
        mean_flow: Vec<[f64; 2]>,
    ) -> Result<Self> {
        for p in psi.iter_mut() {
            p.remove_mean();
        }
        Self::from_gauged_parts(grid, horizon, psi, mean_flow)
    }

    /// Build from node data that already carries the zero-mean gauge, e.g.
    /// loaded from disk; values are taken verbatim so a store/load cycle is
    /// bit-exact.
    pub(crate) fn from_gauged_parts(
        grid: Grid,
        horizon: f64,
        psi: Vec<ScalarField>,
        mean_flow: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if psi.len() < 2 || psi.len() != mean_flow.len() {
            return Err(Error::Config(format!(
                "control needs >= 2 nodes with matching mean-flow entries, got {} / {}",
                psi.len(),
                mean_flow.len()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!(
                "control horizon must be positive, got {horizon}"
            )));
        }
        for p in psi.iter() {
            grid.check_same(p.grid())?;
        }
        Ok(Self {
            grid,
            horizon,
            psi,
            mean_flow,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.psi.len()
    }

    pub fn interval(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn node_time(&self, n: usize) -> f64 {
        self.horizon * n as f64 / self.intervals() as f64
    }

    pub fn node_times(&self) -> Vec<f64> {
        (0..self.node_count()).map(|n| self.node_time(n)).collect()
    }

    pub fn streamfunctions(&self) -> &[ScalarField] {
        &self.psi
    }

    pub fn mean_flows(&self) -> &[[f64; 2]] {
        &self.mean_flow
    }

    /// Velocity at node `n`: `perp_grad(psi_n) + mean_n`. Exactly
    /// divergence-free.
    pub fn node_velocity(&self, n: usize) -> VectorField {
        let mut v = spectral::perp_gradient(&self.psi[n]);
        v.shift(self.mean_flow[n]);
        v
    }

    /// Trapezoidal quadrature weight of node `n` for time integrals.
    pub fn node_weight(&self, n: usize) -> f64 {
        let h = self.interval();
        if n == 0 || n == self.intervals() {
            0.5 * h
        } else {
            h
        }
    }

    /// Interpolation weights at time `t`: node indices and hat-function
    /// coefficients (at most two nonzero).
    pub(crate) fn interp_weights(&self, t: f64) -> Vec<(usize, f64)> {
        let nt = self.intervals();
        let h = self.interval();
        let s = (t / h).clamp(0.0, nt as f64);
        let n = (s.floor() as usize).min(nt - 1);
        let theta = (s - n as f64).clamp(0.0, 1.0);
        if theta == 0.0 {
            vec![(n, 1.0)]
        } else if theta == 1.0 {
            vec![(n + 1, 1.0)]
        } else {
            vec![(n, 1.0 - theta), (n + 1, theta)]
        }
    }

    /// Piecewise-linear interpolant of the streamfunction and mean flow at
    /// time `t` (clamped to `[0, horizon]`).
    pub fn velocity_at(&self, t: f64) -> VectorField {
        let weights = self.interp_weights(t);
        let mut psi = ScalarField::zeros(self.grid);
        let mut mean = [0.0; 2];
        for (n, w) in weights {
            psi.axpy(w, &self.psi[n]);
            mean[0] += w * self.mean_flow[n][0];
            mean[1] += w * self.mean_flow[n][1];
        }
        let mut v = spectral::perp_gradient(&psi);
        v.shift(mean);
        v
    }

    /// Largest pointwise speed over all nodes; interpolated values never
    /// exceed it.
    pub fn max_node_speed(&self) -> f64 {
        (0..self.node_count())
            .map(|n| self.node_velocity(n).max_speed())
            .fold(0.0, f64::max)
    }

    /// Trapezoidal effort `int |K v_t|^2 dt` over the node norms.
    pub fn effort(&self, kind: NormKind) -> f64 {
        (0..self.node_count())
            .map(|n| self.node_weight(n) * control_norm_sq(&self.node_velocity(n), kind))
            .sum()
    }

    /// The time-reversed control: transporting under it undoes this control.
    pub fn reversed(&self) -> ControlPath {
        let psi = self.psi.iter().rev().map(|p| p.scaled(-1.0)).collect();
        let mean_flow = self
            .mean_flow
            .iter()
            .rev()
            .map(|m| [-m[0], -m[1]])
            .collect();
        ControlPath {
            grid: self.grid,
            horizon: self.horizon,
            psi,
            mean_flow,
        }
    }

    /// Concatenate two controls with equal node spacing. The junction node
    /// takes the second control's first value; if the two controls disagree
    /// there, the jump is resolved within one interval of the interpolant.
    pub fn concat(&self, other: &ControlPath) -> Result<ControlPath> {
        self.grid.check_same(&other.grid)?;
        let h = self.interval();
        if ((other.interval() - h) / h).abs() > 1e-12 {
            return Err(Error::Config(
                "concatenation needs equal node spacing".into(),
            ));
        }
        let mut psi = self.psi[..self.psi.len() - 1].to_vec();
        psi.extend(other.psi.iter().cloned());
        let mut mean_flow = self.mean_flow[..self.mean_flow.len() - 1].to_vec();
        mean_flow.extend(other.mean_flow.iter().cloned());
        Ok(ControlPath {
            grid: self.grid,
            horizon: self.horizon + other.horizon,
            psi,
            mean_flow,
        })
    }

    /// In-place update `self += s * direction`, re-fixing the gauge.
    pub fn apply_step(&mut self, s: f64, direction: &ControlDirection) {
        debug_assert_eq!(self.node_count(), direction.psi.len());
        for (p, d) in self.psi.iter_mut().zip(&direction.psi) {
            p.axpy(s, d);
            p.remove_mean();
        }
        for (m, d) in self.mean_flow.iter_mut().zip(&direction.mean_flow) {
            m[0] += s * d[0];
            m[1] += s * d[1];
        }
    }
}

impl Control for ControlPath {
    fn velocity(&self, grid: &Grid, t: f64) -> VectorField {
        debug_assert_eq!(grid, &self.grid);
        self.velocity_at(t)
    }

    fn speed_bound(&self, _grid: &Grid, _t0: f64, _t1: f64) -> f64 {
        self.max_node_speed()
    }

    fn divergence_free_by_construction(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!(
            "control-path(nodes={}, horizon={})",
            self.node_count(),
            self.horizon
        )
    }
}

/// Per-node perturbation of a control path: the gradient object and the
/// line-search direction. Paired with controls through the inner product
/// `sum_n <psi_n, psi'_n>_L2 + measure * sum_n mean_n . mean'_n`.
#[derive(Debug, Clone)]
pub struct ControlDirection {
    pub psi: Vec<ScalarField>,
    pub mean_flow: Vec<[f64; 2]>,
}

impl ControlDirection {
    pub fn zeros_like(path: &ControlPath) -> Self {
        Self {
            psi: vec![ScalarField::zeros(*path.grid()); path.node_count()],
            mean_flow: vec![[0.0; 2]; path.node_count()],
        }
    }

    pub fn pairing(&self, other: &ControlDirection, grid: &Grid) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.psi.iter().zip(&other.psi) {
            acc += a.inner_l2(b).expect("same grid");
        }
        let measure = grid.total_measure();
        for (a, b) in self.mean_flow.iter().zip(&other.mean_flow) {
            acc += measure * (a[0] * b[0] + a[1] * b[1]);
        }
        acc
    }

    pub fn norm(&self, grid: &Grid) -> f64 {
        self.pairing(self, grid).max(0.0).sqrt()
    }

    pub fn axpy(&mut self, a: f64, other: &ControlDirection) {
        for (s, o) in self.psi.iter_mut().zip(&other.psi) {
            s.axpy(a, o);
        }
        for (m, o) in self.mean_flow.iter_mut().zip(&other.mean_flow) {
            m[0] += a * o[0];
            m[1] += a * o[1];
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in self.psi.iter_mut() {
            s.scale(a);
        }
        for m in self.mean_flow.iter_mut() {
            m[0] *= a;
            m[1] *= a;
        }
    }
}

/// Time reparameterization of a control.
#[derive(Debug, Clone)]
pub enum TimeRescale {
    /// Linear map onto a new horizon; effort scales exactly by
    /// `old_horizon / new_horizon` at the quadrature level.
    Linear { new_horizon: f64 },
    /// Differentiable monotone map given as a table: `times` in the new
    /// clock (increasing, spanning `[0, new_horizon]`), `values` in the old
    /// clock (nondecreasing, spanning `[0, horizon]`), and the derivative of
    /// the map at each table point.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
        derivatives: Vec<f64>,
    },
}

fn interp_table(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    if t >= *times.last().expect("nonempty") {
        return *values.last().expect("nonempty");
    }
    let idx = times.partition_point(|&x| x <= t).min(times.len() - 1);
    let (t0, t1) = (times[idx - 1], times[idx]);
    let theta = (t - t0) / (t1 - t0);
    values[idx - 1] * (1.0 - theta) + values[idx] * theta
}

/// Reparameterize a control in time: the rescaled control transports the
/// density along the same path, traversed on the new clock.
pub fn rescale_control(path: &ControlPath, rescale: &TimeRescale) -> Result<ControlPath> {
    match rescale {
        TimeRescale::Linear { new_horizon } => {
            if !(*new_horizon > 0.0 && new_horizon.is_finite()) {
                return Err(Error::Config(format!(
                    "new horizon must be positive, got {new_horizon}"
                )));
            }
            let rate = path.horizon / new_horizon;
            let psi = path.psi.iter().map(|p| p.scaled(rate)).collect();
            let mean_flow = path
                .mean_flow
                .iter()
                .map(|m| [rate * m[0], rate * m[1]])
                .collect();
            Ok(ControlPath {
                grid: path.grid,
                horizon: *new_horizon,
                psi,
                mean_flow,
            })
        }
        TimeRescale::Table {
            times,
            values,
            derivatives,
        } => {
            if times.len() < 2 || times.len() != values.len() || times.len() != derivatives.len() {
                return Err(Error::Config(
                    "rescale table needs matching times/values/derivatives with >= 2 rows".into(),
                ));
            }
            if !times.windows(2).all(|w| w[1] > w[0]) {
                return Err(Error::Config("rescale table times must increase".into()));
            }
            if !values.windows(2).all(|w| w[1] >= w[0]) {
                return Err(Error::Config(
                    "rescale map must be monotone nondecreasing".into(),
                ));
            }
            if derivatives.iter().any(|d| *d < 0.0 || !d.is_finite()) {
                return Err(Error::Config(
                    "rescale map derivatives must be nonnegative".into(),
                ));
            }
            let t_first = times[0];
            let t_last = *times.last().expect("nonempty");
            let v_first = values[0];
            let v_last = *values.last().expect("nonempty");
            if t_first.abs() > 1e-12 || v_first.abs() > 1e-12 {
                return Err(Error::Config("rescale table must start at (0, 0)".into()));
            }
            if (v_last - path.horizon).abs() > 1e-9 * path.horizon {
                return Err(Error::Config(format!(
                    "rescale map must end at the control horizon {}, got {v_last}",
                    path.horizon
                )));
            }
            let new_horizon = t_last;
            let n_nodes = path.node_count();
            let mut psi = Vec::with_capacity(n_nodes);
            let mut mean_flow = Vec::with_capacity(n_nodes);
            for n in 0..n_nodes {
                let t_new = new_horizon * n as f64 / (n_nodes - 1) as f64;
                let sigma = interp_table(times, values, t_new).clamp(0.0, path.horizon);
                let rate = interp_table(times, derivatives, t_new);
                // Interpolate the original control at sigma, then scale.
                let weights = path.interp_weights(sigma);
                let mut p = ScalarField::zeros(path.grid);
                let mut m = [0.0; 2];
                for (k, w) in weights {
                    p.axpy(w * rate, &path.psi[k]);
                    m[0] += w * rate * path.mean_flow[k][0];
                    m[1] += w * rate * path.mean_flow[k][1];
                }
                psi.push(p);
                mean_flow.push(m);
            }
            Ok(ControlPath {
                grid: path.grid,
                horizon: new_horizon,
                psi,
                mean_flow,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn sample_path(grid: Grid) -> ControlPath {
        let intervals = 8;
        let mut psi = Vec::new();
        let mut mean = Vec::new();
        for n in 0..=intervals {
            let mut p = presets::random_band_limited(grid, 100 + n as u64, 4);
            p.scale(0.1 + 0.05 * n as f64);
            psi.push(p);
            mean.push([0.02 * n as f64, -0.01]);
        }
        ControlPath::from_parts(grid, 1.0, psi, mean).unwrap()
    }

    #[test]
    fn node_velocities_are_divergence_free() {
        let g = Grid::square(32).unwrap();
        let path = sample_path(g);
        for n in 0..path.node_count() {
            let v = path.node_velocity(n);
            assert!(spectral::divergence(&v).linf_norm() < 1e-12);
        }
        // Interpolated values too.
        let v = path.velocity_at(0.3611);
        assert!(spectral::divergence(&v).linf_norm() < 1e-12);
    }

    #[test]
    fn identity_rescale_is_bitwise() {
        let g = Grid::square(16).unwrap();
        let path = sample_path(g);
        let same = rescale_control(
            &path,
            &TimeRescale::Linear {
                new_horizon: path.horizon(),
            },
        )
        .unwrap();
        for (a, b) in path.streamfunctions().iter().zip(same.streamfunctions()) {
            assert_eq!(a.values(), b.values());
        }
        assert_eq!(path.mean_flows(), same.mean_flows());
    }

    #[test]
    fn linear_rescale_scales_effort_exactly() {
        let g = Grid::square(16).unwrap();
        let path = sample_path(g);
        for kind in [NormKind::L2, NormKind::H1, NormKind::Enstrophy] {
            let e = path.effort(kind);
            let doubled = rescale_control(&path, &TimeRescale::Linear { new_horizon: 2.0 })
                .unwrap();
            let e2 = doubled.effort(kind);
            // effort(T') * T' = effort(T) * T at the quadrature level.
            let lhs = e2 * 2.0;
            let rhs = e * 1.0;
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.abs(),
                "{kind:?}: {lhs} vs {rhs}"
            );
            assert!((e2 - e / 2.0).abs() <= 1e-12 * e.abs());
        }
    }

    #[test]
    fn table_rescale_validates_monotonicity() {
        let g = Grid::square(16).unwrap();
        let path = sample_path(g);
        let bad = TimeRescale::Table {
            times: vec![0.0, 0.5, 1.0],
            values: vec![0.0, 0.8, 0.4],
            derivatives: vec![1.0, 1.0, 1.0],
        };
        assert!(rescale_control(&path, &bad).is_err());
    }

    #[test]
    fn reversal_is_an_involution() {
        let g = Grid::square(16).unwrap();
        let path = sample_path(g);
        let back = path.reversed().reversed();
        for (a, b) in path.streamfunctions().iter().zip(back.streamfunctions()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn concat_stacks_nodes() {
        let g = Grid::square(16).unwrap();
        let a = sample_path(g);
        let b = sample_path(g);
        let c = a.concat(&b).unwrap();
        assert_eq!(c.node_count(), a.node_count() + b.node_count() - 1);
        assert!((c.horizon() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_flow_effort_closed_form() {
        // Constant (a, 0) on the 2pi torus with the kinetic-energy norm:
        // effort = a^2 (2 pi)^2 T at the quadrature level.
        let g = Grid::square(16).unwrap();
        let a = 0.7;
        let path = ControlPath::constant_flow(g, 5, 2.0, [a, 0.0]).unwrap();
        let expect = a * a * g.total_measure() * 2.0;
        let got = path.effort(NormKind::L2);
        assert!((got - expect).abs() <= 1e-12 * expect, "effort {got} vs {expect}");
    }
}

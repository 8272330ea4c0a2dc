//! Scalar and vector fields sampled on a periodic grid.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Real scalar field sampled at the grid points, row-major with the y-index
/// outer and the x-index inner.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Sample `f(x, y)` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "value buffer has length {}, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Integral of the field over the domain (mean times total measure).
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_measure()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.cell_measure()).sqrt()
    }

    /// Discrete `L2` inner product: sum of pointwise products times the cell
    /// measure.
    pub fn inner_l2(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.cell_measure())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        debug_assert_eq!(self.grid, x.grid);
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in self.values.iter_mut() {
            *s *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn shift(&mut self, c: f64) {
        for s in self.values.iter_mut() {
            *s += c;
        }
    }

    pub fn minus(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    /// Pointwise product.
    pub fn pointwise_mul(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Subtract the mean so the result integrates to zero.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.shift(-m);
    }
}

/// Velocity-style field with one scalar component per axis. Both components
/// share one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    x: ScalarField,
    y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let x = ScalarField::from_fn(grid, |a, b| f(a, b).0);
        let y = ScalarField::from_fn(grid, |a, b| f(a, b).1);
        Self { x, y }
    }

    pub fn from_components(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.grid().check_same(y.grid())?;
        Ok(Self { x, y })
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    pub fn x(&self) -> &ScalarField {
        &self.x
    }

    pub fn y(&self) -> &ScalarField {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut ScalarField {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut ScalarField {
        &mut self.y
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn inner_l2(&self, other: &VectorField) -> Result<f64> {
        Ok(self.x.inner_l2(&other.x)? + self.y.inner_l2(&other.y)?)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.x.l2_norm().powi(2) + self.y.l2_norm().powi(2)).sqrt()
    }

    /// Maximum pointwise speed `max |v(x)|`.
    pub fn max_speed(&self) -> f64 {
        self.x
            .values()
            .iter()
            .zip(self.y.values())
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    /// Mean of each component (the harmonic part of the field on the torus).
    pub fn mean_components(&self) -> [f64; 2] {
        [self.x.mean(), self.y.mean()]
    }

    pub fn axpy(&mut self, a: f64, v: &VectorField) {
        self.x.axpy(a, &v.x);
        self.y.axpy(a, &v.y);
    }

    pub fn scale(&mut self, a: f64) {
        self.x.scale(a);
        self.y.scale(a);
    }

    pub fn scaled(&self, a: f64) -> VectorField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn minus(&self, other: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            x: self.x.minus(&other.x)?,
            y: self.y.minus(&other.y)?,
        })
    }

    /// Add a constant vector to every sample.
    pub fn shift(&mut self, c: [f64; 2]) {
        self.x.shift(c[0]);
        self.y.shift(c[1]);
    }

    /// Pointwise scaling by a scalar field: `(w*vx, w*vy)`.
    pub fn weighted_by(&self, w: &ScalarField) -> VectorField {
        VectorField {
            x: self.x.pointwise_mul(w),
            y: self.y.pointwise_mul(w),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::square(32).unwrap()
    }

    #[test]
    fn inner_product_orthogonal_modes() {
        // <sin x, cos x> = 0 on the torus.
        let a = ScalarField::from_fn(grid(), |x, _| x.sin());
        let b = ScalarField::from_fn(grid(), |x, _| x.cos());
        assert!(a.inner_l2(&b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn inner_product_quadrature() {
        // Oracle: composite trapezoid on a 16x finer grid for int sin^2 x dx dy.
        // The integrand is periodic, so the trapezoid rule is spectrally
        // accurate and the frozen value matches 2*pi^2.
        let n_fine = 512;
        let l = 2.0 * std::f64::consts::PI;
        let h = l / n_fine as f64;
        let mut oracle = 0.0;
        for j in 0..n_fine {
            let _ = j;
        }
        for i in 0..n_fine {
            let x = i as f64 * h;
            oracle += x.sin() * x.sin() * h;
        }
        oracle *= l; // integrand independent of y
        let frozen = 2.0 * std::f64::consts::PI.powi(2);
        assert!((oracle - frozen).abs() < 1e-10, "oracle {oracle} vs {frozen}");

        let a = ScalarField::from_fn(grid(), |x, _| x.sin());
        let got = a.inner_l2(&a).unwrap();
        assert!((got - frozen).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn inner_product_zero_operand() {
        let a = ScalarField::from_fn(grid(), |x, y| (x + y).sin());
        let z = ScalarField::zeros(grid());
        assert_eq!(a.inner_l2(&z).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = ScalarField::zeros(Grid::square(16).unwrap());
        let b = ScalarField::zeros(Grid::square(32).unwrap());
        assert!(a.inner_l2(&b).is_err());
    }

    #[test]
    fn from_values_validates() {
        let g = Grid::square(4).unwrap();
        assert!(ScalarField::from_values(g, vec![0.0; 15]).is_err());
        assert!(ScalarField::from_values(g, vec![f64::NAN; 16]).is_err());
        assert!(ScalarField::from_values(g, vec![1.0; 16]).is_ok());
    }
}

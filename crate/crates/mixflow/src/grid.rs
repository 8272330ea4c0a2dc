//! Uniform periodic grid on the flat torus `[0, lx) x [0, ly)`.

use crate::error::{Error, Result};

/// Discretization of the periodic rectangle. `nx`, `ny` are the number of
/// sample points per axis and must be powers of two; `lx`, `ly` are the domain
/// lengths (default `2*pi` each). Sample `(i, j)` sits at
/// `(i*lx/nx, j*ly/ny)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 || !nx.is_power_of_two() || !ny.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid dimensions must be powers of two >= 2, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::Config(format!(
                "domain lengths must be positive finite, got {lx} x {ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square grid on the standard `2*pi x 2*pi` torus.
    pub fn square(n: usize) -> Result<Self> {
        let l = 2.0 * std::f64::consts::PI;
        Self::new(n, n, l, l)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Measure of one grid cell; the discrete counterpart of the Lebesgue
    /// measure on the domain.
    pub fn cell_measure(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn total_measure(&self) -> f64 {
        self.lx * self.ly
    }

    /// Row-major index with the y-index outer and the x-index inner.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: (self.nx, self.ny),
                got: (other.nx, other.ny),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid::new(12, 16, 1.0, 1.0).is_err());
        assert!(Grid::new(16, 12, 1.0, 1.0).is_err());
        assert!(Grid::new(0, 16, 1.0, 1.0).is_err());
        assert!(Grid::new(16, 16, 0.0, 1.0).is_err());
        assert!(Grid::new(16, 16, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn measures() {
        let g = Grid::square(16).unwrap();
        let l = 2.0 * std::f64::consts::PI;
        assert!((g.cell_measure() - (l / 16.0) * (l / 16.0)).abs() < 1e-15);
        assert!((g.total_measure() - l * l).abs() < 1e-12);
        assert_eq!(g.index(3, 2), 2 * 16 + 3);
    }
}

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// A uniform periodic position grid for a particle of mass `M`.
///
/// Nodes sit at `x_min + i·dx` with `dx = (x_max − x_min)/n`; the conjugate
/// momentum grid has spacing `dp = 2π/(n·dx)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_points: usize,
    x_min: f64,
    x_max: f64,
    mass: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, x_min: f64, x_max: f64, mass: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(Error::InvalidGrid(format!("n_points = {n_points} < 8")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!("need x_max > x_min, got [{x_min}, {x_max}]")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidGrid(format!("mass must be positive, got {mass}")));
        }
        Ok(GridSpec { n_points, x_min, x_max, mass })
    }

    /// Grid symmetric about the origin.
    pub fn symmetric(n_points: usize, half_width: f64, mass: f64) -> Result<Self> {
        Self::new(n_points, -half_width, half_width, mass)
    }

    pub fn n(&self) -> usize {
        self.n_points
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI / self.length()
    }

    /// Largest representable momentum magnitude, `π/dx`.
    pub fn p_max(&self) -> f64 {
        PI / self.dx()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Momentum of each FFT bin, in FFT order (non-negative first).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as isize;
        let dp = self.dp();
        (0..n)
            .map(|j| {
                let m = if j < (n + 1) / 2 { j } else { j - n };
                m as f64 * dp
            })
            .collect()
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let f = ((x - self.x_min) / self.dx()).round();
        f.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        Self::new(self.n_points, self.x_min, self.x_max, mass)
    }
}

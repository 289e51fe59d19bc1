use serde::{Deserialize, Serialize};

use crate::qstate::PhasePoint;
use crate::{Error, Result};

/// One rectangle `μ_α` of a phase-space partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub ix: usize,
    pub ip: usize,
    pub x: (f64, f64),
    pub p: (f64, f64),
}

impl Cell {
    pub fn center(&self) -> PhasePoint {
        PhasePoint::new(0.5 * (self.x.0 + self.x.1), 0.5 * (self.p.0 + self.p.1))
    }

    pub fn contains(&self, z: PhasePoint) -> bool {
        z.q >= self.x.0 && z.q < self.x.1 && z.p >= self.p.0 && z.p < self.p.1
    }
}

/// A rectangular window tiled by `nx × np` equal cells. Cell `α` has
/// position column `α / np` and momentum row `α % np`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePartition {
    x_min: f64,
    p_min: f64,
    d_x: f64,
    d_p: f64,
    nx: usize,
    np: usize,
}

impl PhasePartition {
    pub fn new(x_min: f64, p_min: f64, d_x: f64, d_p: f64, nx: usize, np: usize) -> Result<Self> {
        if !(x_min.is_finite() && p_min.is_finite()) {
            return Err(Error::param("partition", "window corner must be finite"));
        }
        if !(d_x.is_finite() && d_x > 0.0 && d_p.is_finite() && d_p > 0.0) {
            return Err(Error::param("partition", "cell sides must be positive"));
        }
        if nx == 0 || np == 0 {
            return Err(Error::param("partition", "need at least one cell per axis"));
        }
        if d_x * d_p < 1.0 - 1e-12 {
            return Err(Error::param(
                "partition",
                format!("cell volume {} is below one coherent-state cell", d_x * d_p),
            ));
        }
        Ok(PhasePartition { x_min, p_min, d_x, d_p, nx, np })
    }

    /// Partition centred on `center`.
    pub fn around(center: PhasePoint, d_x: f64, d_p: f64, nx: usize, np: usize) -> Result<Self> {
        Self::new(center.q - 0.5 * d_x * nx as f64, center.p - 0.5 * d_p * np as f64, d_x, d_p, nx, np)
    }

    /// Smallest partition with the given cell sides covering the rectangle
    /// `[x_lo, x_hi] × [p_lo, p_hi]`, centred on it.
    pub fn covering(x: (f64, f64), p: (f64, f64), d_x: f64, d_p: f64) -> Result<Self> {
        let nx = (((x.1 - x.0) / d_x).ceil().max(1.0)) as usize;
        let np = (((p.1 - p.0) / d_p).ceil().max(1.0)) as usize;
        let c = PhasePoint::new(0.5 * (x.0 + x.1), 0.5 * (p.0 + p.1));
        Self::around(c, d_x, d_p, nx, np)
    }

    pub fn translated(&self, dz: PhasePoint) -> Self {
        PhasePartition { x_min: self.x_min + dz.q, p_min: self.p_min + dz.p, ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.nx * self.np
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.np)
    }

    pub fn d_x(&self) -> f64 {
        self.d_x
    }

    pub fn d_p(&self) -> f64 {
        self.d_p
    }

    pub fn x_window(&self) -> (f64, f64) {
        (self.x_min, self.x_min + self.d_x * self.nx as f64)
    }

    pub fn p_window(&self) -> (f64, f64) {
        (self.p_min, self.p_min + self.d_p * self.np as f64)
    }

    pub fn window_center(&self) -> PhasePoint {
        let (a, b) = self.x_window();
        let (c, d) = self.p_window();
        PhasePoint::new(0.5 * (a + b), 0.5 * (c + d))
    }

    pub fn cell(&self, index: usize) -> Cell {
        let ix = index / self.np;
        let ip = index % self.np;
        let x0 = self.x_min + ix as f64 * self.d_x;
        let p0 = self.p_min + ip as f64 * self.d_p;
        Cell { index, ix, ip, x: (x0, x0 + self.d_x), p: (p0, p0 + self.d_p) }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell(i))
    }

    pub fn cell_of(&self, z: PhasePoint) -> Option<usize> {
        let fx = ((z.q - self.x_min) / self.d_x).floor();
        let fp = ((z.p - self.p_min) / self.d_p).floor();
        if fx < 0.0 || fp < 0.0 || fx >= self.nx as f64 || fp >= self.np as f64 {
            return None;
        }
        Some(fx as usize * self.np + fp as usize)
    }

    /// Cells sharing an edge or a corner.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (ca, cb) = (self.cell(a), self.cell(b));
        a != b && ca.ix.abs_diff(cb.ix) <= 1 && ca.ip.abs_diff(cb.ip) <= 1
    }

    /// Whether `z` lies in cell `α` grown by one cell on every side.
    pub fn near_cell(&self, alpha: usize, z: PhasePoint) -> bool {
        let c = self.cell(alpha);
        z.q >= c.x.0 - self.d_x && z.q <= c.x.1 + self.d_x && z.p >= c.p.0 - self.d_p && z.p <= c.p.1 + self.d_p
    }
}

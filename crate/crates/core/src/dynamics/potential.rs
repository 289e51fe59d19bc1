use serde::{Deserialize, Serialize};

use crate::qstate::fourier::{derivative, spectral};
use crate::qstate::GridSpec;
use crate::{Error, Result, C64};

/// External potential `V(X)` of the system Hamiltonian `P²/2M + V(X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// `½Mω²x²`.
    Harmonic {
        omega: f64,
    },
    /// `a·x² + b·x⁴`.
    Quartic {
        a: f64,
        b: f64,
    },
    /// Values on the simulation grid; `l_v` is the user's length scale.
    Tabulated {
        values: Vec<f64>,
        l_v: f64,
    },
}

impl Potential {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(Error::param("omega", "must be finite and positive"));
                }
                Ok(())
            }
            Potential::Quartic { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::param("quartic", "coefficients must be finite"));
                }
                Ok(())
            }
            Potential::Tabulated { values, l_v } => {
                if values.len() != grid.n() {
                    return Err(Error::param(
                        "potential",
                        format!("{} tabulated values for a {}-point grid", values.len(), grid.n()),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("potential", "tabulated values must be finite"));
                }
                if !(*l_v > 0.0) {
                    return Err(Error::param("l_v", "must be positive"));
                }
                Ok(())
            }
        }
    }

    /// `V(x)` for analytic kinds; tabulated potentials interpolate linearly.
    pub fn value_at(&self, x: f64, grid: &GridSpec) -> f64 {
        let m = grid.mass();
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * m * omega * omega * x * x,
            Potential::Quartic { a, b } => a * x * x + b * x.powi(4),
            Potential::Tabulated { values, .. } => interpolate(values, x, grid),
        }
    }

    /// `V'(x)`; for tabulated kinds the spectral derivative is interpolated.
    pub fn derivative_at(&self, x: f64, grid: &GridSpec) -> f64 {
        let m = grid.mass();
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => m * omega * omega * x,
            Potential::Quartic { a, b } => 2.0 * a * x + 4.0 * b * x.powi(3),
            Potential::Tabulated { .. } => interpolate(&self.derivative_on(grid), x, grid),
        }
    }

    pub fn values_on(&self, grid: &GridSpec) -> Vec<f64> {
        match self {
            Potential::Tabulated { values, .. } => values.clone(),
            _ => grid.positions().iter().map(|&x| self.value_at(x, grid)).collect(),
        }
    }

    pub fn derivative_on(&self, grid: &GridSpec) -> Vec<f64> {
        match self {
            Potential::Tabulated { values, .. } => spectral_derivative(values, grid),
            _ => grid.positions().iter().map(|&x| self.derivative_at(x, grid)).collect(),
        }
    }

    /// Length scale on which `V` varies; `∞` when the force is linear.
    pub fn length_scale(&self) -> f64 {
        match self {
            Potential::Free | Potential::Harmonic { .. } => f64::INFINITY,
            Potential::Quartic { a, b } => {
                if *b == 0.0 {
                    f64::INFINITY
                } else {
                    (a / b).abs().sqrt()
                }
            }
            Potential::Tabulated { l_v, .. } => *l_v,
        }
    }

    /// Largest classical frequency scale, used for integrator step heuristics.
    pub fn frequency_scale(&self, grid: &GridSpec, extent: f64) -> f64 {
        let m = grid.mass();
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => *omega,
            Potential::Quartic { a, b } => {
                let curv = (2.0 * a + 12.0 * b * extent * extent).abs();
                (curv / m).sqrt()
            }
            Potential::Tabulated { .. } => {
                let d = self.derivative_on(grid);
                let dx = grid.dx();
                let n = d.len();
                let curv = (0..n).map(|i| ((d[(i + 1) % n] - d[i]) / dx).abs()).fold(0.0, f64::max);
                (curv / m).sqrt()
            }
        }
    }

    pub fn is_linear_force(&self) -> bool {
        matches!(self, Potential::Free | Potential::Harmonic { .. })
    }
}

fn spectral_derivative(values: &[f64], grid: &GridSpec) -> Vec<f64> {
    let sp = spectral(grid.n());
    let buf: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    derivative(&sp, &buf, &grid.wavenumbers()).into_iter().map(|z| z.re).collect()
}

/// Periodic linear interpolation of a grid table.
pub(crate) fn interpolate(table: &[f64], x: f64, grid: &GridSpec) -> f64 {
    let n = table.len();
    let s = ((x - grid.x_min()) / grid.dx()).rem_euclid(n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    table[i] * (1.0 - f) + table[(i + 1) % n] * f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::symmetric(128, 10.0, 2.0).unwrap()
    }

    #[test]
    fn analytic_derivatives_agree_with_spectral() {
        let g = grid();
        // A smooth bump that is periodic to machine precision on the grid.
        for v in [Potential::Harmonic { omega: 0.3 }, Potential::Quartic { a: -1.0, b: 0.05 }] {
            let vals: Vec<f64> = g.positions().iter().map(|&x| v.value_at(x, &g) * (-x * x / 2.0).exp()).collect();
            let tab = Potential::Tabulated { values: vals, l_v: 1.0 };
            let spec = tab.derivative_on(&g);
            for (i, &x) in g.positions().iter().enumerate() {
                let w = (-x * x / 2.0).exp();
                let exact = v.derivative_at(x, &g) * w - v.value_at(x, &g) * w * x;
                assert!((spec[i] - exact).abs() < 1e-6, "x={x}: {} vs {exact}", spec[i]);
            }
        }
    }

    #[test]
    fn length_scales() {
        assert!(Potential::Harmonic { omega: 1.0 }.length_scale().is_infinite());
        assert!(Potential::Free.length_scale().is_infinite());
        let q = Potential::Quartic { a: -2.0, b: 0.5 };
        assert!((q.length_scale() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_uses_grid_mass() {
        let g = grid();
        let v = Potential::Harmonic { omega: 0.5 };
        assert!((v.value_at(2.0, &g) - 0.5 * 2.0 * 0.25 * 4.0).abs() < 1e-15);
        assert!((v.derivative_at(2.0, &g) - 2.0 * 0.25 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_length_is_checked() {
        let g = grid();
        let v = Potential::Tabulated { values: vec![0.0; 5], l_v: 1.0 };
        assert!(v.validate(&g).is_err());
    }
}

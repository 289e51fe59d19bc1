use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::dynamics::Potential;
use crate::qstate::{GridSpec, PhasePoint};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
}

impl ClassicalTrajectory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,p\n");
        for (t, z) in self.times.iter().zip(&self.points) {
            let _ = writeln!(s, "{t},{},{}", z.q, z.p);
        }
        s
    }
}

/// Kick-drift-kick leapfrog for `Ẋ = P/M`, `Ṗ = −V'(X)`, recorded every
/// `record_every`. The step is shrunk so that it divides `record_every`.
pub fn classical_evolve(
    z0: PhasePoint,
    v: &Potential,
    grid: &GridSpec,
    total_time: f64,
    dt_cl: f64,
    record_every: f64,
) -> Result<ClassicalTrajectory> {
    if !(dt_cl.is_finite() && dt_cl > 0.0) {
        return Err(Error::param("dt_cl", "must be finite and positive"));
    }
    if !(record_every.is_finite() && record_every > 0.0) {
        return Err(Error::param("record_every", "must be finite and positive"));
    }
    if !(total_time.is_finite() && total_time >= 0.0) {
        return Err(Error::param("total_time", "must be finite and non-negative"));
    }
    let n_rec = (total_time / record_every - 1e-9).ceil().max(0.0) as usize;
    let per = (record_every / dt_cl).ceil().max(1.0) as usize;
    let h = record_every / per as f64;
    let m = grid.mass();
    let (mut x, mut p) = (z0.q, z0.p);
    let mut out = ClassicalTrajectory { times: vec![0.0], points: vec![z0] };
    let mut force = -v.derivative_at(x, grid);
    for rec in 1..=n_rec {
        for _ in 0..per {
            p += 0.5 * h * force;
            x += h * p / m;
            force = -v.derivative_at(x, grid);
            p += 0.5 * h * force;
        }
        out.times.push(rec as f64 * record_every);
        out.points.push(PhasePoint::new(x, p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_motion_is_exact() {
        let g = GridSpec::symmetric(64, 10.0, 2.0).unwrap();
        let tr = classical_evolve(PhasePoint::new(1.0, 3.0), &Potential::Free, &g, 2.0, 0.1, 0.5).unwrap();
        assert_eq!(tr.points.len(), 5);
        for (t, z) in tr.times.iter().zip(&tr.points) {
            assert!((z.q - (1.0 + 1.5 * t)).abs() < 1e-12);
            assert_eq!(z.p, 3.0);
        }
    }
}

//! Time stepping for `i u_t + Δu = |u|^2 - mean|u|^2` truncated to `|n| <= N`.
//!
//! In Fourier variables `d/dt u(n) = -i|n|^2 u(n) - i P_N(|u|^2 - mean)(n)`.
//! Two independent routes are provided: the first-order expansion `u = z + v`
//! with `z` the free evolution of the data and `v` the fixed point of the
//! Duhamel map ([`duhamel`]), and a direct integrating-factor RK4 integrator
//! for `u` itself ([`truncated`]).

pub mod dealias;
pub mod duhamel;
pub mod study;
pub mod truncated;

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{data_lines, fmt_real};
use crate::lattice::{bracket, Disc, FrequencyIndex};
use crate::random_field::{linear_flow, SpectralField};

pub use dealias::{nonlinearity, DealiasedSquare, DEFAULT_PAD_FACTOR};
pub use duhamel::{duhamel_map, solve_v, solve_v_from_data, SolveDiagnostics, SolveOptions};
pub use study::{convergence_study, StudyOptions, StudyRow, StudyTable, STUDY_CSV_HEADER};
pub use truncated::{integrate_truncated, solve_u_truncated, BLOW_UP_THRESHOLD};

/// Fields on the uniform grid `t_j = j dt`, `j = 0..=J`; `dt < 0` is a backward run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryField {
    dt: f64,
    fields: Vec<SpectralField>,
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,n1,n2,re,im";

impl TrajectoryField {
    pub fn new(dt: f64, fields: Vec<SpectralField>) -> Result<Self> {
        let first = fields.first().ok_or(Error::EmptyInput)?;
        if !dt.is_finite() {
            return Err(Error::InvalidInput("time step must be finite".into()));
        }
        if fields.iter().any(|f| f.truncation() != first.truncation()) {
            return Err(Error::GridMismatch("fields have different truncations".into()));
        }
        Ok(TrajectoryField { dt, fields })
    }

    /// `J + 1` zero fields.
    pub fn zeros(disc: Arc<Disc>, dt: f64, steps: usize) -> Self {
        TrajectoryField {
            dt,
            fields: vec![SpectralField::zeros_on(disc); steps + 1],
        }
    }

    /// Free evolution of `data` on the grid.
    pub fn linear(data: &SpectralField, dt: f64, steps: usize) -> Self {
        TrajectoryField {
            dt,
            fields: (0..=steps).map(|j| linear_flow(data, j as f64 * dt)).collect(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of intervals `J`.
    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.fields.len()).map(|j| self.time(j)).collect()
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &SpectralField {
        &self.fields[j]
    }

    pub fn last(&self) -> &SpectralField {
        self.fields.last().expect("trajectories are non-empty")
    }

    pub fn truncation(&self) -> u32 {
        self.fields[0].truncation()
    }

    pub fn disc(&self) -> &Arc<Disc> {
        self.fields[0].disc()
    }

    /// Errors unless `other` shares the time grid and truncation.
    pub fn check_compatible(&self, other: &TrajectoryField) -> Result<()> {
        if self.fields.len() != other.fields.len() || self.dt != other.dt {
            return Err(Error::GridMismatch(format!(
                "time grids differ: {} steps of {} vs {} steps of {}",
                self.steps(),
                self.dt,
                other.steps(),
                other.dt
            )));
        }
        if self.truncation() != other.truncation() {
            return Err(Error::GridMismatch(format!(
                "truncations differ: {} vs {}",
                self.truncation(),
                other.truncation()
            )));
        }
        Ok(())
    }

    /// Every `k`-th grid time, `t_0` included.
    pub fn every(&self, k: usize) -> Result<TrajectoryField> {
        if k == 0 || self.steps() % k != 0 {
            return Err(Error::GridMismatch(format!(
                "{} steps cannot be thinned by {k}",
                self.steps()
            )));
        }
        Ok(TrajectoryField {
            dt: self.dt * k as f64,
            fields: self.fields.iter().step_by(k).cloned().collect(),
        })
    }

    /// Pointwise sum on a common grid.
    pub fn add(&self, other: &TrajectoryField) -> Result<TrajectoryField> {
        self.check_compatible(other)?;
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| {
                let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + y).collect();
                SpectralField::from_amplitudes(a.disc().clone(), amps)
            })
            .collect::<Result<_>>()?;
        Ok(TrajectoryField { dt: self.dt, fields })
    }

    /// Zero extension of every field to a larger disc.
    pub fn extend_to(&self, disc: Arc<Disc>) -> Result<TrajectoryField> {
        let fields = self
            .fields
            .iter()
            .map(|f| f.extend_to(disc.clone()))
            .collect::<Result<_>>()?;
        Ok(TrajectoryField { dt: self.dt, fields })
    }

    /// `sup_j ||self(t_j) - other(t_j)||_{H^s}`; the smaller disc is zero-extended.
    pub fn sup_distance(&self, other: &TrajectoryField, s: f64) -> Result<f64> {
        if self.fields.len() != other.fields.len() || self.dt != other.dt {
            return Err(Error::GridMismatch("time grids differ".into()));
        }
        let (big, small) = if self.truncation() >= other.truncation() {
            (self, other)
        } else {
            (other, self)
        };
        let weights = sobolev_weights(big.disc(), s);
        let mut sup: f64 = 0.0;
        for (a, b) in big.fields.iter().zip(&small.fields) {
            let mut acc = 0.0;
            for (i, (&n, x)) in big.disc().points().iter().zip(a.amplitudes()).enumerate() {
                let y = b.get(n).unwrap_or_default();
                acc += weights[i] * (x - y).norm_sqr();
            }
            let d = acc.sqrt();
            if d.is_nan() {
                return Ok(f64::NAN);
            }
            sup = sup.max(d);
        }
        Ok(sup)
    }

    pub fn sup_norm(&self, s: f64) -> f64 {
        let weights = sobolev_weights(self.disc(), s);
        self.fields
            .iter()
            .map(|f| weighted_norm(&weights, f.amplitudes()))
            .fold(0.0, f64::max)
    }

    /// Writes `t,n1,n2,re,im` rows, time-major.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
        for (j, f) in self.fields.iter().enumerate() {
            let t = fmt_real(self.time(j));
            for (n, a) in f.iter() {
                writeln!(out, "{t},{},{},{},{}", n.n1, n.n2, fmt_real(a.re), fmt_real(a.im))?;
            }
        }
        Ok(())
    }

    /// Parses [`TrajectoryField::write_csv`] output on the disc of radius `truncation`.
    pub fn read_csv(text: &str, truncation: u32) -> Result<TrajectoryField> {
        let disc = Arc::new(Disc::new(truncation));
        let mut times: Vec<f64> = Vec::new();
        let mut fields: Vec<SpectralField> = Vec::new();
        for (line_no, line) in data_lines(text, TRAJECTORY_CSV_HEADER) {
            let bad = |m: String| Error::Parse {
                line: line_no,
                message: m,
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(bad(format!("expected 5 columns, found {}", cols.len())));
            }
            let t: f64 = cols[0].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let n1: i32 = cols[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let n2: i32 = cols[2].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let re: f64 = cols[3].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let im: f64 = cols[4].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            if times.last() != Some(&t) {
                times.push(t);
                fields.push(SpectralField::zeros_on(disc.clone()));
            }
            let n = FrequencyIndex::new(n1, n2);
            let i = disc
                .position(n)
                .ok_or_else(|| bad(format!("mode {n} outside |n| <= {truncation}")))?;
            fields.last_mut().unwrap().amplitudes_mut()[i] = Complex64::new(re, im);
        }
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        TrajectoryField::new(dt, fields)
    }
}

/// `<n>^{2s}` for each disc point.
pub(crate) fn sobolev_weights(disc: &Disc, s: f64) -> Vec<f64> {
    disc.points().iter().map(|&n| bracket(n).powf(2.0 * s)).collect()
}

pub(crate) fn weighted_norm(weights: &[f64], amps: &[Complex64]) -> f64 {
    weights
        .iter()
        .zip(amps)
        .map(|(w, a)| w * a.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_field::{sample_data, GaussianSeed};

    #[test]
    fn csv_round_trip() {
        let data = sample_data(GaussianSeed::new(2), 0.3, 3);
        let traj = TrajectoryField::linear(&data, 0.125, 4);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = TrajectoryField::read_csv(std::str::from_utf8(&buf).unwrap(), 3).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = TrajectoryField::zeros(Arc::new(Disc::new(3)), 0.1, 4);
        let b = TrajectoryField::zeros(Arc::new(Disc::new(4)), 0.1, 4);
        let c = TrajectoryField::zeros(Arc::new(Disc::new(3)), 0.1, 5);
        assert!(matches!(a.check_compatible(&b), Err(Error::GridMismatch(_))));
        assert!(matches!(a.check_compatible(&c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn sup_distance_zero_extends() {
        let data = sample_data(GaussianSeed::new(2), 0.3, 4);
        let small = TrajectoryField::linear(&data.restrict(2).unwrap(), 0.1, 3);
        let big = TrajectoryField::linear(&data, 0.1, 3);
        let d = big.sup_distance(&small, 0.0).unwrap();
        let tail: f64 = data
            .iter()
            .filter(|(n, _)| n.norm_sq() > 4)
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!((d - tail).abs() < 1e-12);
        assert_eq!(small.sup_distance(&big, 0.0).unwrap(), d);
    }
}

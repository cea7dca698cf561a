//! Cauchy behavior of `u_N = z_N + v_N` as the truncation doubles.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::duhamel::{solve_v_from_data, SolveOptions};
use super::TrajectoryField;
use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::random_field::{sample_data, GaussianSeed, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub solve: SolveOptions,
    /// Measurement regularity; `None` means `-alpha - 0.1`.
    pub s_measure: Option<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            solve: SolveOptions::default(),
            s_measure: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub alpha: f64,
    #[serde(rename = "N")]
    pub truncation: u32,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub s: f64,
    /// `sup_j ||u_{2N}(t_j) - u_N(t_j)||_{H^s}`; absent when a solve failed.
    pub distance: Option<f64>,
    /// Larger iteration count of the two solves.
    pub iterations: Option<usize>,
    pub converged: bool,
}

pub const STUDY_CSV_HEADER: &str = "alpha,N,T,s,distance,iterations,converged";

impl StudyRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_real(self.alpha),
            self.truncation,
            fmt_real(self.horizon),
            fmt_real(self.s),
            self.distance.map(fmt_real).unwrap_or_default(),
            self.iterations.map(|i| i.to_string()).unwrap_or_default(),
            self.converged
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// `log2(d(N) / d(2N))` between consecutive rows.
    pub log2_decrements: Vec<Option<f64>>,
}

impl StudyTable {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{STUDY_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn distances(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.distance).collect()
    }

    /// All cells converged and `d(N)` strictly decreases.
    pub fn strictly_decreasing(&self) -> bool {
        let d = self.distances();
        d.iter().all(Option::is_some)
            && d.windows(2).all(|w| w[1].unwrap() < w[0].unwrap())
    }
}

/// Fraction of tables whose distances strictly decrease.
pub fn monotone_fraction(tables: &[StudyTable]) -> f64 {
    if tables.is_empty() {
        return f64::NAN;
    }
    tables.iter().filter(|t| t.strictly_decreasing()).count() as f64 / tables.len() as f64
}

fn check_dyadic(list: &[u32]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::EmptyInput);
    }
    if list.iter().any(|n| !n.is_power_of_two()) || list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "N list must be ascending powers of two, got {list:?}"
        )));
    }
    Ok(())
}

/// Study for the random data of `seed`; every `u_N` is driven by the
/// restriction of one sample, so the runs are coupled.
pub fn convergence_study(
    alpha: f64,
    seed: GaussianSeed,
    n_list: &[u32],
    horizon: f64,
    opts: &StudyOptions,
) -> Result<StudyTable> {
    check_dyadic(n_list)?;
    let top = 2 * *n_list.last().unwrap();
    let data = sample_data(seed, alpha, top);
    let s = opts.s_measure.unwrap_or(-alpha - 0.1);
    convergence_study_on(&data, alpha, n_list, horizon, s, &opts.solve)
}

/// Study for explicit data, given on a disc at least twice the largest `N`.
pub fn convergence_study_on(
    data: &SpectralField,
    alpha: f64,
    n_list: &[u32],
    horizon: f64,
    s: f64,
    solve: &SolveOptions,
) -> Result<StudyTable> {
    check_dyadic(n_list)?;
    let top = 2 * *n_list.last().unwrap();
    if data.truncation() < top {
        return Err(Error::InvalidInput(format!(
            "data truncation {} below the required {top}",
            data.truncation()
        )));
    }
    let mut levels: Vec<u32> = n_list.iter().flat_map(|&n| [n, 2 * n]).collect();
    levels.sort_unstable();
    levels.dedup();
    let solved: Vec<Option<(TrajectoryField, usize)>> = levels
        .par_iter()
        .map(|&n| {
            let d = data.restrict(n).ok()?;
            let (v, diag) = solve_v_from_data(&d, horizon, solve).ok()?;
            let z = TrajectoryField::linear(&d, v.dt(), solve.steps);
            Some((z.add(&v).ok()?, diag.iteration_count))
        })
        .collect();
    let lookup = |n: u32| solved[levels.binary_search(&n).unwrap()].as_ref();
    let rows: Vec<StudyRow> = n_list
        .iter()
        .map(|&n| {
            let (distance, iterations) = match (lookup(n), lookup(2 * n)) {
                (Some((lo, i)), Some((hi, j))) => (hi.sup_distance(lo, s).ok(), Some(*i.max(j))),
                _ => (None, None),
            };
            StudyRow {
                alpha,
                truncation: n,
                horizon,
                s,
                distance,
                iterations,
                converged: distance.is_some(),
            }
        })
        .collect();
    let log2_decrements = rows
        .windows(2)
        .map(|w| match (w[0].distance, w[1].distance) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
            _ => None,
        })
        .collect();
    Ok(StudyTable {
        rows,
        log2_decrements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_gives_zero_distances() {
        let zero = SpectralField::zeros(16);
        let t = convergence_study_on(&zero, 0.25, &[4, 8], 0.01, -0.35, &SolveOptions::default()).unwrap();
        for r in &t.rows {
            assert_eq!(r.distance, Some(0.0));
            assert!(r.converged);
        }
    }

    #[test]
    fn list_validation() {
        let s = GaussianSeed::new(1);
        let o = StudyOptions::default();
        assert!(convergence_study(0.25, s, &[8, 4], 0.01, &o).is_err());
        assert!(convergence_study(0.25, s, &[6, 12], 0.01, &o).is_err());
        assert!(convergence_study(0.25, s, &[], 0.01, &o).is_err());
    }

    #[test]
    fn mean_square_distance_decreases_for_small_alpha() {
        let seeds = 6;
        let mut mean_sq = [0.0; 3];
        for s in 0..seeds {
            let t = convergence_study(0.25, GaussianSeed::new(s), &[4, 8, 16], 0.01, &StudyOptions::default())
                .unwrap();
            assert_eq!(t.log2_decrements.len(), 2);
            for (acc, d) in mean_sq.iter_mut().zip(t.distances()) {
                *acc += d.unwrap().powi(2) / seeds as f64;
            }
        }
        assert!(mean_sq[1] < mean_sq[0] && mean_sq[2] < mean_sq[1], "{mean_sq:?}");
    }

    #[test]
    fn failed_cells_are_recorded() {
        let t = convergence_study(0.9, GaussianSeed::new(1), &[8], 1.0, &StudyOptions::default()).unwrap();
        assert!(!t.rows[0].converged);
        assert!(t.rows[0].csv_row().ends_with(",,,false"));
    }
}

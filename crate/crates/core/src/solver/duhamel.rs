//! The Duhamel map `Γ[v](t) = -i ∫_0^t e^{i(t-t')Δ} P_N(|z+v|^2 - mean)(t') dt'`
//! and its fixed point.
//!
//! The integral is a composite trapezoid on the trajectory grid with the
//! propagator kept exact per mode, via the recurrence
//! `I_j = E I_{j-1} + (dt/2)(E w_{j-1} + w_j)`, `E = e^{-i dt |n|^2}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dealias::{DealiasedSquare, DEFAULT_PAD_FACTOR};
use super::TrajectoryField;
use crate::error::{Error, Result};
use crate::random_field::{propagator, sample_data, GaussianSeed, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iteration_count: usize,
    /// `d_k / d_{k-1}` with `d_k = sup_j ||v_{k+1} - v_k||_{H^s}`.
    pub contraction_ratios: Vec<f64>,
    pub final_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Number of time intervals `J`.
    pub steps: usize,
    /// Regularity of the monitoring norm.
    pub s_monitor: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub pad_factor: u32,
    /// Solve on `[-T, 0]` instead of `[0, T]`.
    pub backward: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            steps: 64,
            s_monitor: 0.1,
            tol: 1e-10,
            max_iter: 60,
            pad_factor: DEFAULT_PAD_FACTOR,
            backward: false,
        }
    }
}

/// `Γ[v]` at every grid time, for the linear part `z`.
pub fn duhamel_map(z: &TrajectoryField, v: &TrajectoryField) -> Result<TrajectoryField> {
    let mut eval = DealiasedSquare::new(z.disc().clone(), DEFAULT_PAD_FACTOR)?;
    duhamel_map_with(z, v, &mut eval)
}

pub fn duhamel_map_with(
    z: &TrajectoryField,
    v: &TrajectoryField,
    eval: &mut DealiasedSquare,
) -> Result<TrajectoryField> {
    z.check_compatible(v)?;
    if eval.disc().truncation() != z.truncation() {
        return Err(Error::GridMismatch("evaluator built for another disc".into()));
    }
    let disc = z.disc().clone();
    let dt = z.dt();
    let step: Vec<Complex64> = disc.points().iter().map(|&n| propagator(dt, n)).collect();
    let half = Complex64::new(0.0, -0.5 * dt);
    let forcing = |j: usize, eval: &mut DealiasedSquare| -> Vec<Complex64> {
        let u: Vec<Complex64> = z
            .field(j)
            .amplitudes()
            .iter()
            .zip(v.field(j).amplitudes())
            .map(|(a, b)| a + b)
            .collect();
        eval.apply(&u)
    };
    let mut integral = vec![Complex64::default(); disc.len()];
    let mut fields = Vec::with_capacity(z.steps() + 1);
    fields.push(SpectralField::zeros_on(disc.clone()));
    let mut prev = forcing(0, eval);
    for j in 1..=z.steps() {
        let cur = forcing(j, eval);
        for i in 0..integral.len() {
            integral[i] = step[i] * (integral[i] + half * prev[i]) + half * cur[i];
        }
        fields.push(SpectralField::from_amplitudes(disc.clone(), integral.clone())?);
        prev = cur;
    }
    TrajectoryField::new(dt, fields)
}

/// Fixed point of `Γ` for the random data of `seed`.
pub fn solve_v(
    alpha: f64,
    truncation: u32,
    seed: GaussianSeed,
    horizon: f64,
    s_exponent: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(TrajectoryField, SolveDiagnostics)> {
    if truncation == 0 {
        return Err(Error::InvalidInput("truncation N must be >= 1".into()));
    }
    let data = sample_data(seed, alpha, truncation);
    let opts = SolveOptions {
        s_monitor: s_exponent,
        tol,
        max_iter,
        ..SolveOptions::default()
    };
    solve_v_from_data(&data, horizon, &opts)
}

/// Iterates `v_{k+1} = Γ[v_k]` from `v_0 = 0` until successive iterates are
/// within `tol` in `sup_j H^s`.
pub fn solve_v_from_data(
    data: &SpectralField,
    horizon: f64,
    opts: &SolveOptions,
) -> Result<(TrajectoryField, SolveDiagnostics)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("T must be positive, got {horizon}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if opts.steps == 0 || opts.max_iter == 0 {
        return Err(Error::InvalidInput("steps and max_iter must be positive".into()));
    }
    let dt = if opts.backward { -horizon } else { horizon } / opts.steps as f64;
    let z = TrajectoryField::linear(data, dt, opts.steps);
    let mut eval = DealiasedSquare::new(data.disc().clone(), opts.pad_factor)?;
    let mut v = TrajectoryField::zeros(data.disc().clone(), dt, opts.steps);
    let mut ratios: Vec<f64> = Vec::new();
    let mut prev: Option<f64> = None;
    let mut dist = f64::INFINITY;
    for k in 1..=opts.max_iter {
        let next = duhamel_map_with(&z, &v, &mut eval)?;
        dist = next.sup_distance(&v, opts.s_monitor)?;
        if !dist.is_finite() {
            return Err(Error::NoContraction {
                iterations: k,
                last_ratio: ratios.last().copied().unwrap_or(f64::INFINITY),
                residual: dist,
            });
        }
        if let Some(p) = prev {
            if p > 0.0 {
                ratios.push(dist / p);
            }
        }
        v = next;
        let floor = 64.0 * f64::EPSILON * v.sup_norm(opts.s_monitor);
        if dist <= opts.tol.max(floor) {
            return Ok((
                v,
                SolveDiagnostics {
                    iteration_count: k,
                    contraction_ratios: ratios,
                    final_residual: dist,
                },
            ));
        }
        if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|&r| r >= 1.0) {
            return Err(Error::NoContraction {
                iterations: k,
                last_ratio: *ratios.last().unwrap(),
                residual: dist,
            });
        }
        prev = Some(dist);
    }
    let last_ratio = ratios.last().copied().unwrap_or(f64::NAN);
    if last_ratio >= 1.0 || last_ratio.is_nan() {
        Err(Error::NoContraction {
            iterations: opts.max_iter,
            last_ratio,
            residual: dist,
        })
    } else {
        Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: dist,
            estimate: last_ratio,
            last_iterate: v.last().amplitudes().to_vec(),
        })
    }
}

/// Largest `l^2` residual of `i u_t + Δu - P_N(|u|^2 - mean)` with centered
/// time differences at interior grid nodes.
pub fn centered_residual(u: &TrajectoryField, pad_factor: u32) -> Result<f64> {
    if u.steps() < 2 {
        return Err(Error::InvalidInput("need at least two intervals".into()));
    }
    let mut eval = DealiasedSquare::new(u.disc().clone(), pad_factor)?;
    let dt = u.dt();
    let pts = u.disc().points();
    let mut worst: f64 = 0.0;
    for j in 1..u.steps() {
        let (a, b, c) = (u.field(j - 1), u.field(j), u.field(j + 1));
        let nl = eval.apply(b.amplitudes());
        let mut acc = 0.0;
        for i in 0..pts.len() {
            let ut = (c.amplitudes()[i] - a.amplitudes()[i]) / (2.0 * dt);
            let r = Complex64::new(0.0, 1.0) * ut - b.amplitudes()[i] * pts[i].norm_sq() as f64 - nl[i];
            acc += r.norm_sqr();
        }
        worst = worst.max(acc.sqrt());
    }
    Ok(worst)
}

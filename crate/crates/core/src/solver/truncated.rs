//! Direct integration of the truncated equation by Lawson's
//! integrating-factor RK4.
//!
//! With `E = e^{-i|n|^2 dt/2}` and `F(u) = -i P_N(|u|^2 - mean)`:
//!
//! ```text
//! k1 = F(u)
//! k2 = F(E(u + dt/2 k1))
//! k3 = F(E u + dt/2 k2)
//! k4 = F(E^2 u + dt E k3)
//! u+ = E^2 u + dt/6 (E^2 k1 + 2E(k2 + k3) + k4)
//! ```

use num_complex::Complex64;

use super::dealias::{DealiasedSquare, DEFAULT_PAD_FACTOR};
use super::TrajectoryField;
use crate::error::{Error, Result};
use crate::random_field::{propagator, sample_data, GaussianSeed, SpectralField};

/// Amplitude beyond which a step is rejected.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// `steps` RK4 steps of size `horizon / steps` (negative `horizon` runs backward).
pub fn integrate_truncated(
    data: &SpectralField,
    horizon: f64,
    steps: usize,
    nonlinear: bool,
    pad_factor: u32,
) -> Result<TrajectoryField> {
    if steps == 0 || !horizon.is_finite() {
        return Err(Error::InvalidInput("need a finite horizon and at least one step".into()));
    }
    let disc = data.disc().clone();
    let dt = horizon / steps as f64;
    let e_half: Vec<Complex64> = disc.points().iter().map(|&n| propagator(0.5 * dt, n)).collect();
    let e_full: Vec<Complex64> = disc.points().iter().map(|&n| propagator(dt, n)).collect();
    let mut eval = DealiasedSquare::new(disc.clone(), pad_factor)?;
    let minus_i = Complex64::new(0.0, -1.0);
    let mut rhs = |u: &[Complex64]| -> Vec<Complex64> {
        if nonlinear {
            eval.apply(u).into_iter().map(|z| minus_i * z).collect()
        } else {
            vec![Complex64::default(); u.len()]
        }
    };
    let len = disc.len();
    let mut u = data.amplitudes().to_vec();
    let mut fields = Vec::with_capacity(steps + 1);
    fields.push(data.clone());
    let mut stage = vec![Complex64::default(); len];
    for j in 1..=steps {
        let k1 = rhs(&u);
        for i in 0..len {
            stage[i] = e_half[i] * (u[i] + 0.5 * dt * k1[i]);
        }
        let k2 = rhs(&stage);
        for i in 0..len {
            stage[i] = e_half[i] * u[i] + 0.5 * dt * k2[i];
        }
        let k3 = rhs(&stage);
        for i in 0..len {
            stage[i] = e_full[i] * u[i] + dt * e_half[i] * k3[i];
        }
        let k4 = rhs(&stage);
        for i in 0..len {
            u[i] = e_full[i] * u[i]
                + dt / 6.0 * (e_full[i] * k1[i] + 2.0 * e_half[i] * (k2[i] + k3[i]) + k4[i]);
        }
        if u.iter().any(|z| !(z.norm() <= BLOW_UP_THRESHOLD)) {
            return Err(Error::BlowUp { time: j as f64 * dt });
        }
        fields.push(SpectralField::from_amplitudes(disc.clone(), u.clone())?);
    }
    TrajectoryField::new(dt, fields)
}

/// `u_N` on `[0, T]` from the random data of `seed`, with step at most `dt`.
pub fn solve_u_truncated(
    alpha: f64,
    truncation: u32,
    seed: GaussianSeed,
    horizon: f64,
    dt: f64,
) -> Result<TrajectoryField> {
    if truncation == 0 {
        return Err(Error::InvalidInput("truncation N must be >= 1".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("T must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt <= horizon / 16.0) {
        return Err(Error::InvalidInput(format!(
            "dt must lie in (0, T/16], got {dt} for T = {horizon}"
        )));
    }
    let steps = (horizon / dt * (1.0 - 1e-12)).ceil() as usize;
    let data = sample_data(seed, alpha, truncation);
    integrate_truncated(&data, horizon, steps, true, DEFAULT_PAD_FACTOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::FrequencyIndex;
    use crate::random_field::linear_flow;
    use crate::solver::duhamel::{solve_v_from_data, SolveOptions};

    #[test]
    fn zero_data_stays_zero() {
        let t = integrate_truncated(&SpectralField::zeros(8), 0.01, 16, true, 4).unwrap();
        assert!(t.fields().iter().all(|f| f.is_zero()));
    }

    #[test]
    fn linear_mode_reproduces_free_flow() {
        let u0 = sample_data(GaussianSeed::new(8), 0.0, 16);
        let t = integrate_truncated(&u0, 0.3, 40, false, 4).unwrap();
        for (j, f) in t.fields().iter().enumerate() {
            let exact = linear_flow(&u0, t.time(j));
            for (a, b) in f.amplitudes().iter().zip(exact.amplitudes()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn step_restrictions() {
        let s = GaussianSeed::new(1);
        assert!(solve_u_truncated(0.25, 8, s, 0.01, 0.01 / 8.0).is_err());
        assert!(solve_u_truncated(0.25, 8, s, 0.01, 0.01 / 16.0).is_ok());
        assert!(solve_u_truncated(0.25, 8, s, -0.01, 0.001).is_err());
    }

    #[test]
    fn fourth_order_refinement() {
        let u0 = sample_data(GaussianSeed::new(2), 0.25, 8);
        let horizon = 0.05;
        let reference = integrate_truncated(&u0, horizon, 1024, true, 4).unwrap();
        let err = |steps: usize| {
            let t = integrate_truncated(&u0, horizon, steps, true, 4).unwrap();
            t.last()
                .amplitudes()
                .iter()
                .zip(reference.last().amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err(16) / err(32);
        assert!((12.0..=20.0).contains(&ratio), "refinement ratio {ratio}");
    }

    #[test]
    fn mean_mode_is_invariant() {
        let u0 = sample_data(GaussianSeed::new(6), 0.25, 8);
        let t = integrate_truncated(&u0, 0.05, 20, true, 4).unwrap();
        let m0 = u0.get(FrequencyIndex::ZERO).unwrap();
        for f in t.fields() {
            assert_eq!(f.get(FrequencyIndex::ZERO).unwrap(), m0);
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        // conj(u(-t)) solves the same equation with data conj(u0(-n))
        let u0 = sample_data(GaussianSeed::new(7), 0.25, 10);
        let reflected = SpectralField::from_fn(u0.disc().clone(), |n| u0.get(-n).unwrap().conj());
        let back = integrate_truncated(&u0, -0.05, 32, true, 4).unwrap();
        let fwd = integrate_truncated(&reflected, 0.05, 32, true, 4).unwrap();
        for (b, f) in back.fields().iter().zip(fwd.fields()) {
            for (n, a) in f.iter() {
                assert!((a - b.get(-n).unwrap().conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn agrees_with_first_order_expansion() {
        let u0 = sample_data(GaussianSeed::new(3), 0.25, 16);
        let expansion = |steps| {
            let opts = SolveOptions { steps, ..SolveOptions::default() };
            let (v, _) = solve_v_from_data(&u0, 0.01, &opts).unwrap();
            TrajectoryField::linear(&u0, v.dt(), steps).add(&v).unwrap()
        };
        let (coarse, fine) = (expansion(64), expansion(128));
        // Richardson estimate of the trapezoid error of the coarse run
        let estimate = coarse.sup_distance(&fine.every(2).unwrap(), -0.35).unwrap() * 4.0 / 3.0;
        let u = integrate_truncated(&u0, 0.01, 64, true, 4).unwrap();
        let d = coarse.sup_distance(&u, -0.35).unwrap();
        assert!(d <= 10.0 * estimate.max(1e-10), "distance {d}, estimate {estimate}");
        assert!(d >= 0.5 * estimate, "distance {d}, estimate {estimate}");
    }
}

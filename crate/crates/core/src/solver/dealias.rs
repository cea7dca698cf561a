//! The renormalized product `P_N(|u|^2 - mean|u|^2)` by zero-padded transforms.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::Disc;
use crate::random_field::SpectralField;
use crate::spectral::PaddedGrid;

pub const DEFAULT_PAD_FACTOR: u32 = 4;

/// Reusable evaluator of `P_N(|u|^2)` with the zero mode removed.
#[derive(Debug)]
pub struct DealiasedSquare {
    disc: Arc<Disc>,
    grid: PaddedGrid,
    zero: Option<usize>,
}

impl DealiasedSquare {
    pub fn new(disc: Arc<Disc>, pad_factor: u32) -> Result<Self> {
        if pad_factor < 3 {
            return Err(Error::InvalidInput(format!(
                "pad factor must be at least 3, got {pad_factor}"
            )));
        }
        let grid = PaddedGrid::for_truncation(disc.truncation(), pad_factor);
        let zero = disc.position(crate::lattice::FrequencyIndex::ZERO);
        Ok(DealiasedSquare { disc, grid, zero })
    }

    pub fn disc(&self) -> &Arc<Disc> {
        &self.disc
    }

    pub fn grid_size(&self) -> usize {
        self.grid.size()
    }

    /// Amplitudes of `P_N(|u|^2 - mean|u|^2)` for `u` given by `amps`.
    pub fn apply(&mut self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut phys = self.grid.to_physical(&self.disc, amps);
        for z in phys.iter_mut() {
            *z = Complex64::new(z.norm_sqr(), 0.0);
        }
        let mut out = self.grid.to_spectral(phys, &self.disc);
        if let Some(i) = self.zero {
            out[i] = Complex64::new(0.0, 0.0);
        }
        out
    }
}

/// `|u|^2 - mean|u|^2` truncated to the disc of `u`.
pub fn nonlinearity(u: &SpectralField, pad_factor: u32) -> Result<SpectralField> {
    let mut eval = DealiasedSquare::new(u.disc().clone(), pad_factor)?;
    let amps = eval.apply(u.amplitudes());
    SpectralField::from_amplitudes(u.disc().clone(), amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::FrequencyIndex;
    use crate::random_field::{sample_data, GaussianSeed};

    fn fi(a: i32, b: i32) -> FrequencyIndex {
        FrequencyIndex::new(a, b)
    }

    /// `sum_{n1 - n2 = n} u(n1) conj(u(n2))` on the disc, zero mode dropped.
    fn direct(u: &SpectralField) -> Vec<Complex64> {
        let disc = u.disc();
        disc.points()
            .iter()
            .map(|&n| {
                if n.is_zero() {
                    return Complex64::default();
                }
                let mut acc = Complex64::default();
                for (i, &n2) in disc.points().iter().enumerate() {
                    if let Some(j) = disc.position(n + n2) {
                        acc += u.amplitudes()[j] * u.amplitudes()[i].conj();
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_direct_convolution() {
        for (big_n, alpha) in [(1, 0.0), (4, 0.25), (9, 0.5), (16, 0.0)] {
            let u = sample_data(GaussianSeed::new(big_n as u64), alpha, big_n);
            for pad in [3, 4] {
                let fast = nonlinearity(&u, pad).unwrap();
                let slow = direct(&u);
                let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (a, b) in fast.amplitudes().iter().zip(&slow) {
                    assert!((a - b).norm() <= 1e-12 * scale, "N={big_n} pad={pad}");
                }
            }
        }
    }

    #[test]
    fn constant_and_single_mode_vanish() {
        let c = SpectralField::from_modes(4, [(fi(0, 0), Complex64::new(1.5, -2.0))]).unwrap();
        assert!(nonlinearity(&c, 4).unwrap().amplitudes().iter().all(|z| z.norm() < 1e-14));
        let e = SpectralField::from_modes(4, [(fi(2, -3), Complex64::new(1.0, 0.0))]).unwrap();
        assert!(nonlinearity(&e, 4).unwrap().amplitudes().iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn two_modes_give_difference_frequencies() {
        let (a, b) = (fi(1, 2), fi(-1, 0));
        let one = Complex64::new(1.0, 0.0);
        let u = SpectralField::from_modes(5, [(a, one), (b, one)]).unwrap();
        let out = nonlinearity(&u, 4).unwrap();
        for (n, z) in out.iter() {
            let expect = if n == a - b || n == b - a { 1.0 } else { 0.0 };
            assert!((z - Complex64::new(expect, 0.0)).norm() < 1e-14, "{n}");
        }
    }

    #[test]
    fn pad_factor_checked() {
        assert!(DealiasedSquare::new(Arc::new(Disc::new(4)), 2).is_err());
    }
}

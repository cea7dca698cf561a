//! Zero-padded physical grids for pseudo-spectral products.
//!
//! A field `u(x) = sum_n u(n) e^{i n.x}` is evaluated on an `M x M` grid of
//! `[0, 2 pi)^2`. Products of fields band-limited to `|n| <= N` are exact on
//! the kept band whenever `M > 3N`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::{Disc, FrequencyIndex};

pub struct PaddedGrid {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose_buf: Vec<Complex64>,
}

impl std::fmt::Debug for PaddedGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaddedGrid").field("size", &self.size).finish()
    }
}

impl PaddedGrid {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        PaddedGrid {
            size,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transpose_buf: vec![Complex64::default(); size * size],
        }
    }

    /// Smallest power of two that is at least `pad_factor * truncation`.
    pub fn for_truncation(truncation: u32, pad_factor: u32) -> Self {
        let target = (pad_factor as usize * truncation as usize).max(1);
        PaddedGrid::new(target.next_power_of_two())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn wrap(&self, k: i32) -> usize {
        k.rem_euclid(self.size as i32) as usize
    }

    /// Grid values `u(x_j)`, row-major in `(j1, j2)`.
    pub fn to_physical(&mut self, disc: &Disc, amplitudes: &[Complex64]) -> Vec<Complex64> {
        let m = self.size;
        let mut grid = vec![Complex64::default(); m * m];
        for (n, a) in disc.points().iter().zip(amplitudes) {
            grid[self.wrap(n.n1) * m + self.wrap(n.n2)] = *a;
        }
        self.transform(&mut grid, false);
        grid
    }

    /// Fourier coefficients of grid values, read back on `disc`.
    pub fn to_spectral(&mut self, mut grid: Vec<Complex64>, disc: &Disc) -> Vec<Complex64> {
        let m = self.size;
        self.transform(&mut grid, true);
        let norm = 1.0 / (m * m) as f64;
        disc.points()
            .iter()
            .map(|n| grid[self.wrap(n.n1) * m + self.wrap(n.n2)] * norm)
            .collect()
    }

    /// Coefficient of mode `n` in grid data already transformed forward.
    pub fn coefficient(&self, transformed: &[Complex64], n: FrequencyIndex) -> Complex64 {
        let m = self.size;
        transformed[self.wrap(n.n1) * m + self.wrap(n.n2)] / (m * m) as f64
    }

    /// Unnormalized 2D DFT; `forward` uses `e^{-i}` kernels.
    pub fn transform(&mut self, grid: &mut [Complex64], forward: bool) {
        let m = self.size;
        assert_eq!(grid.len(), m * m);
        let fft = if forward { &self.forward } else { &self.inverse };
        fft.process_with_scratch(grid, &mut self.scratch);
        transpose(grid, &mut self.transpose_buf, m);
        fft.process_with_scratch(&mut self.transpose_buf, &mut self.scratch);
        transpose(&self.transpose_buf, grid, m);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], m: usize) {
    const BLOCK: usize = 16;
    for ib in (0..m).step_by(BLOCK) {
        for jb in (0..m).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(m) {
                for j in jb..(jb + BLOCK).min(m) {
                    dst[j * m + i] = src[i * m + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_field::{sample_data, GaussianSeed};

    #[test]
    fn round_trip_recovers_amplitudes() {
        let f = sample_data(GaussianSeed::new(1), 0.2, 7);
        let mut grid = PaddedGrid::for_truncation(7, 4);
        let phys = grid.to_physical(f.disc(), f.amplitudes());
        let back = grid.to_spectral(phys, f.disc());
        for (a, b) in back.iter().zip(f.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_is_plane_wave() {
        let disc = Disc::new(3);
        let n = FrequencyIndex::new(2, -1);
        let mut amps = vec![Complex64::default(); disc.len()];
        amps[disc.position(n).unwrap()] = Complex64::new(1.0, 0.0);
        let mut grid = PaddedGrid::new(16);
        let phys = grid.to_physical(&disc, &amps);
        let h = std::f64::consts::TAU / 16.0;
        for j1 in 0..16 {
            for j2 in 0..16 {
                let x = Complex64::from_polar(1.0, h * (2.0 * j1 as f64 - j2 as f64));
                assert!((phys[j1 * 16 + j2] - x).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn sampled_data_is_not_real_valued() {
        // no conjugate symmetry is imposed on the g_n
        for seed in 0..5u64 {
            let f = sample_data(GaussianSeed::new(seed), 0.0, 6);
            let mut grid = PaddedGrid::for_truncation(6, 4);
            let phys = grid.to_physical(f.disc(), f.amplitudes());
            let max_im = phys.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            assert!(max_im > 1e-3);
        }
    }
}

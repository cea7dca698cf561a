//! Gaussian random initial data, its free evolution and Sobolev norms.
//!
//! # Sampling procedure
//!
//! Each complex Gaussian `g_n` is a pure function of `(master_seed, n)`:
//!
//! 1. `packed = (n1 as u32 as u64) << 32 | (n2 as u32 as u64)`
//! 2. `key = mix64(master_seed ^ mix64(packed ^ GOLDEN))`
//! 3. `b1 = mix64(key + GOLDEN)`, `b2 = mix64(key + 2 * GOLDEN)` (wrapping)
//! 4. `u1 = ((b1 >> 11) + 1) * 2^-53` in `(0, 1]`, `u2 = (b2 >> 11) * 2^-53` in `[0, 1)`
//! 5. `g = sqrt(-ln u1) * (cos(2 pi u2) + i sin(2 pi u2))`
//!
//! where `mix64` is the SplitMix64 finalizer and `GOLDEN = 0x9E3779B97F4A7C15`.
//! Real and imaginary parts are independent normals of variance 1/2, so
//! `E|g|^2 = 1`. Because no generator state is threaded between modes, a
//! field sampled at truncation `N` restricts exactly to the one sampled at
//! any `N' < N`.

use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{data_lines, fmt_real};
use crate::lattice::{bracket, Disc, FrequencyIndex};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GaussianSeed {
    pub master_seed: u64,
}

impl GaussianSeed {
    pub const fn new(master_seed: u64) -> Self {
        GaussianSeed { master_seed }
    }

    /// Seed of the `i`-th member of a Monte Carlo ensemble.
    pub fn offset(self, i: u64) -> Self {
        GaussianSeed::new(self.master_seed.wrapping_add(i))
    }
}

fn mode_key(seed: GaussianSeed, n: FrequencyIndex) -> u64 {
    let packed = ((n.n1 as u32 as u64) << 32) | (n.n2 as u32 as u64);
    mix64(seed.master_seed ^ mix64(packed ^ GOLDEN))
}

/// Standard complex Gaussian `g_n`, deterministic in `(seed, n)`.
pub fn sample_gaussian(seed: GaussianSeed, n: FrequencyIndex) -> Complex64 {
    let key = mode_key(seed, n);
    let b1 = mix64(key.wrapping_add(GOLDEN));
    let b2 = mix64(key.wrapping_add(GOLDEN.wrapping_mul(2)));
    let u1 = ((b1 >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b2 >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    Complex64::new(r * c, r * s)
}

/// Fourier amplitudes on the disc `{|n| <= N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    disc: Arc<Disc>,
    amplitudes: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(truncation: u32) -> Self {
        Self::zeros_on(Arc::new(Disc::new(truncation)))
    }

    pub fn zeros_on(disc: Arc<Disc>) -> Self {
        let amplitudes = vec![Complex64::new(0.0, 0.0); disc.len()];
        SpectralField { disc, amplitudes }
    }

    pub fn from_fn(disc: Arc<Disc>, mut f: impl FnMut(FrequencyIndex) -> Complex64) -> Self {
        let amplitudes = disc.points().iter().map(|&n| f(n)).collect();
        SpectralField { disc, amplitudes }
    }

    /// Wraps amplitudes listed in the disc's lexicographic order.
    pub fn from_amplitudes(disc: Arc<Disc>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != disc.len() {
            return Err(Error::InvalidInput(format!(
                "{} amplitudes for a disc of {} modes",
                amplitudes.len(),
                disc.len()
            )));
        }
        Ok(SpectralField { disc, amplitudes })
    }

    /// Builds a field from `(n, amplitude)` pairs; unlisted modes are zero.
    pub fn from_modes(
        truncation: u32,
        modes: impl IntoIterator<Item = (FrequencyIndex, Complex64)>,
    ) -> Result<Self> {
        let mut field = SpectralField::zeros(truncation);
        for (n, a) in modes {
            let i = field.disc.position(n).ok_or_else(|| {
                Error::InvalidInput(format!("mode {n} outside |n| <= {truncation}"))
            })?;
            field.amplitudes[i] = a;
        }
        Ok(field)
    }

    pub fn truncation(&self) -> u32 {
        self.disc.truncation()
    }

    pub fn disc(&self) -> &Arc<Disc> {
        &self.disc
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Amplitude at `n`, or `None` outside the truncation.
    pub fn get(&self, n: FrequencyIndex) -> Option<Complex64> {
        self.disc.position(n).map(|i| self.amplitudes[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrequencyIndex, Complex64)> + '_ {
        self.disc.points().iter().copied().zip(self.amplitudes.iter().copied())
    }

    /// Restriction to `|n| <= truncation` (which must not exceed the current one).
    pub fn restrict(&self, truncation: u32) -> Result<SpectralField> {
        if truncation > self.truncation() {
            return Err(Error::InvalidInput(format!(
                "cannot restrict N = {} field to N = {truncation}",
                self.truncation()
            )));
        }
        let disc = Arc::new(Disc::new(truncation));
        Ok(SpectralField::from_fn(disc, |n| self.get(n).unwrap()))
    }

    /// Zero extension to a larger disc.
    pub fn extend_to(&self, disc: Arc<Disc>) -> Result<SpectralField> {
        if disc.truncation() < self.truncation() {
            return Err(Error::InvalidInput("extension target is smaller".into()));
        }
        Ok(SpectralField::from_fn(disc, |n| {
            self.get(n).unwrap_or(Complex64::new(0.0, 0.0))
        }))
    }

    pub fn is_zero(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re == 0.0 && a.im == 0.0)
    }

    /// Writes the `n1,n2,re,im` CSV form.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{FIELD_CSV_HEADER}")?;
        for (n, a) in self.iter() {
            writeln!(out, "{},{},{},{}", n.n1, n.n2, fmt_real(a.re), fmt_real(a.im))?;
        }
        Ok(())
    }

    /// Parses the CSV form written by [`SpectralField::write_csv`].
    pub fn read_csv(text: &str, truncation: u32) -> Result<SpectralField> {
        let mut modes = Vec::new();
        for (line_no, line) in data_lines(text, FIELD_CSV_HEADER) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 4 columns, found {}", cols.len()),
                });
            }
            let bad = |m: String| Error::Parse {
                line: line_no,
                message: m,
            };
            let n1 = cols[0].parse::<i32>().map_err(|e| bad(e.to_string()))?;
            let n2 = cols[1].parse::<i32>().map_err(|e| bad(e.to_string()))?;
            let re = cols[2].parse::<f64>().map_err(|e| bad(e.to_string()))?;
            let im = cols[3].parse::<f64>().map_err(|e| bad(e.to_string()))?;
            modes.push((FrequencyIndex::new(n1, n2), Complex64::new(re, im)));
        }
        SpectralField::from_modes(truncation, modes)
    }
}

pub const FIELD_CSV_HEADER: &str = "n1,n2,re,im";

/// Random initial data `g_n / <n>^{1 - alpha}` on `{|n| <= N}`.
pub fn sample_data(seed: GaussianSeed, alpha: f64, truncation: u32) -> SpectralField {
    sample_data_on(seed, alpha, Arc::new(Disc::new(truncation)))
}

pub fn sample_data_on(seed: GaussianSeed, alpha: f64, disc: Arc<Disc>) -> SpectralField {
    SpectralField::from_fn(disc, |n| {
        sample_gaussian(seed, n) * data_weight(alpha, n)
    })
}

/// `<n>^{alpha - 1}`
pub fn data_weight(alpha: f64, n: FrequencyIndex) -> f64 {
    (1.0 + n.norm_sq() as f64).powf(0.5 * (alpha - 1.0))
}

/// Multiplier of the free propagator at mode `n` over time `t`: `exp(-i t |n|^2)`.
pub fn propagator(t: f64, n: FrequencyIndex) -> Complex64 {
    Complex64::from_polar(1.0, -t * n.norm_sq() as f64)
}

/// Free Schrödinger evolution `exp(it Laplacian)`.
pub fn linear_flow(field: &SpectralField, t: f64) -> SpectralField {
    SpectralField {
        disc: field.disc.clone(),
        amplitudes: field
            .iter()
            .map(|(n, a)| a * propagator(t, n))
            .collect(),
    }
}

/// `(sum <n>^{2s} |u(n)|^2)^{1/2}`; torus-measure factors are dropped.
pub fn sobolev_norm(field: &SpectralField, s: f64) -> f64 {
    sobolev_norm_of(field.disc(), field.amplitudes(), s)
}

pub(crate) fn sobolev_norm_of(disc: &Disc, amplitudes: &[Complex64], s: f64) -> f64 {
    disc.points()
        .iter()
        .zip(amplitudes)
        .map(|(&n, a)| bracket(n).powf(2.0 * s) * a.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `H^s` norm of `a - b` on a common disc.
pub fn sobolev_distance(a: &SpectralField, b: &SpectralField, s: f64) -> Result<f64> {
    if a.truncation() != b.truncation() {
        return Err(Error::InvalidInput(format!(
            "truncations differ: {} vs {}",
            a.truncation(),
            b.truncation()
        )));
    }
    let diff: Vec<Complex64> = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| x - y)
        .collect();
    Ok(sobolev_norm_of(a.disc(), &diff, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{truncation_set, TruncationMode};
    use crate::stats::mean_estimate;
    use proptest::prelude::*;

    fn fi(a: i32, b: i32) -> FrequencyIndex {
        FrequencyIndex::new(a, b)
    }

    #[test]
    fn gaussian_is_deterministic() {
        let s = GaussianSeed::new(42);
        assert_eq!(sample_gaussian(s, fi(3, -7)), sample_gaussian(s, fi(3, -7)));
        assert_ne!(sample_gaussian(s, fi(3, -7)), sample_gaussian(s, fi(-7, 3)));
    }

    #[test]
    fn gaussian_moments_over_seeds() {
        let n = fi(2, 1);
        let draws: Vec<Complex64> = (0..100_000u64)
            .map(|i| sample_gaussian(GaussianSeed::new(0xA5A5).offset(i), n))
            .collect();
        let re: Vec<f64> = draws.iter().map(|g| g.re).collect();
        let im: Vec<f64> = draws.iter().map(|g| g.im).collect();
        let sq: Vec<f64> = draws.iter().map(|g| g.norm_sqr()).collect();
        assert!(mean_estimate(&re).within(0.0, 3.0));
        assert!(mean_estimate(&im).within(0.0, 3.0));
        assert!(mean_estimate(&sq).within(1.0, 3.0));
        // each part has variance 1/2
        let re2: Vec<f64> = re.iter().map(|x| x * x).collect();
        assert!(mean_estimate(&re2).within(0.5, 3.0));
    }

    #[test]
    fn distinct_modes_uncorrelated() {
        let (a, b) = (fi(1, 0), fi(0, 1));
        let prods: Vec<Complex64> = (0..10_000u64)
            .map(|i| {
                let s = GaussianSeed::new(7).offset(i);
                sample_gaussian(s, a) * sample_gaussian(s, b).conj()
            })
            .collect();
        let re: Vec<f64> = prods.iter().map(|p| p.re).collect();
        let im: Vec<f64> = prods.iter().map(|p| p.im).collect();
        assert!(mean_estimate(&re).within(0.0, 3.0));
        assert!(mean_estimate(&im).within(0.0, 3.0));
    }

    #[test]
    fn alpha_one_gives_unit_weights() {
        let seed = GaussianSeed::new(11);
        let f = sample_data(seed, 1.0, 6);
        for (n, a) in f.iter() {
            assert!((a.norm() - sample_gaussian(seed, n).norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_mode_is_unweighted() {
        let seed = GaussianSeed::new(3);
        for alpha in [-1.0, 0.0, 0.3, 0.75, 2.0] {
            let f = sample_data(seed, alpha, 4);
            assert_eq!(f.get(FrequencyIndex::ZERO).unwrap(), sample_gaussian(seed, FrequencyIndex::ZERO));
        }
    }

    #[test]
    fn data_second_moment_matches_weight() {
        let alpha = 0.25;
        let n = fi(2, -1);
        let vals: Vec<f64> = (0..10_000u64)
            .map(|i| sample_data(GaussianSeed::new(99).offset(i), alpha, 3).get(n).unwrap().norm_sqr())
            .collect();
        let expect = bracket(n).powf(2.0 * alpha - 2.0);
        assert!(mean_estimate(&vals).within(expect, 3.0));
    }

    #[test]
    fn restriction_is_exact() {
        let seed = GaussianSeed::new(2024);
        let big = sample_data(seed, 0.4, 20);
        for small_n in [1u32, 5, 12, 19] {
            assert_eq!(big.restrict(small_n).unwrap(), sample_data(seed, 0.4, small_n));
        }
    }

    #[test]
    fn linear_flow_identity_and_group() {
        let f = sample_data(GaussianSeed::new(5), 0.3, 10);
        assert_eq!(linear_flow(&f, 0.0), f);
        let (s, t) = (0.37, -1.21);
        let two = linear_flow(&linear_flow(&f, s), t);
        let one = linear_flow(&f, s + t);
        for (a, b) in two.amplitudes().iter().zip(one.amplitudes()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
        for (a, b) in linear_flow(&f, 2.5).amplitudes().iter().zip(f.amplitudes()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-14 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn sobolev_examples() {
        let one = Complex64::new(1.0, 0.0);
        let f0 = SpectralField::from_modes(2, [(FrequencyIndex::ZERO, one)]).unwrap();
        for s in [-1.0, 0.0, 0.5, 3.0] {
            assert!((sobolev_norm(&f0, s) - 1.0).abs() < 1e-15);
        }
        let f1 = SpectralField::from_modes(2, [(fi(1, 0), one)]).unwrap();
        assert!((sobolev_norm(&f1, 1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn negative_sobolev_norm_mean_matches_direct_sum() {
        let (alpha, eps, big_n) = (0.3, 0.1, 8u32);
        let vals: Vec<f64> = (0..4_000u64)
            .map(|i| {
                let f = sample_data(GaussianSeed::new(1234).offset(i), alpha, big_n);
                sobolev_norm(&f, -alpha - eps).powi(2)
            })
            .collect();
        let expect: f64 = truncation_set(big_n, TruncationMode::Euclidean)
            .into_iter()
            .map(|n| bracket(n).powf(-2.0 * eps - 2.0))
            .sum();
        assert!(mean_estimate(&vals).within(expect, 3.0));
    }

    #[test]
    fn unitarity_of_linear_flow() {
        let f = sample_data(GaussianSeed::new(8), 0.5, 16);
        for s in [-0.6, 0.0, 0.1, 1.0] {
            let before = sobolev_norm(&f, s);
            let after = sobolev_norm(&linear_flow(&f, 0.731), s);
            assert!((before - after).abs() <= 1e-12 * before);
        }
    }

    #[test]
    fn csv_rejects_out_of_range_mode() {
        let text = "n1,n2,re,im\n5,0,1.0,0.0\n";
        assert!(SpectralField::read_csv(text, 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn csv_round_trip_is_exact(seed in any::<u64>(), alpha in -1.0f64..1.5, big_n in 1u32..8) {
            let f = sample_data(GaussianSeed::new(seed), alpha, big_n);
            let mut buf = Vec::new();
            f.write_csv(&mut buf).unwrap();
            let back = SpectralField::read_csv(std::str::from_utf8(&buf).unwrap(), big_n).unwrap();
            prop_assert_eq!(back, f);
        }

        #[test]
        fn sampling_independent_of_enumeration_order(seed in any::<u64>(), a in -50i32..50, b in -50i32..50) {
            let s = GaussianSeed::new(seed);
            let n = fi(a, b);
            let before = sample_gaussian(s, n);
            let _ = sample_gaussian(s, fi(b, a));
            prop_assert_eq!(before, sample_gaussian(s, n));
        }
    }
}

//! Picard second iterate of the truncated random linear flow.
//!
//! For `n != 0` the `n`-th Fourier coefficient of the second iterate is
//!
//! ```text
//! z2(t, n) = sum_{|k| <= N, |n+k| <= N} u0(n+k) conj(u0(k)) e^{-it|n|^2} K(t, n.k),
//! K(t, p)  = (1 - e^{-2itp}) / (2ip),   K(t, 0) = t,
//! ```
//!
//! with `u0(n) = g_n / <n>^{1-alpha}`. Its second moment is
//! `sum <n+k>^{2a-2} <k>^{2a-2} W(t, n.k)` with `W(t, p) = c sin^2(tp)/p^2`
//! and `W(t, 0) = c t^2`. The overall constant `c` is not taken on faith:
//! [`kernel_calibration`] fixes it once by Monte Carlo against the sum with
//! `c = 1` and picks the nearer of the candidates `{1, 2}`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::lattice::{truncation_set, Disc, FrequencyIndex, Nonlinearity, TruncationMode};
use crate::random_field::{sample_data_on, GaussianSeed, SpectralField};
use crate::stats::{mean_estimate, KahanSum};

/// Time kernel `K(t, p)` of the second iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub t: f64,
    pub p: i64,
    pub value: Complex64,
}

impl KernelValue {
    pub fn new(t: f64, p: i64) -> Self {
        KernelValue {
            t,
            p,
            value: time_kernel(t, p),
        }
    }
}

/// `(1 - e^{-2itp}) / (2ip) = e^{-itp} sin(tp) / p`, and `t` at `p = 0`.
pub fn time_kernel(t: f64, p: i64) -> Complex64 {
    if p == 0 {
        return Complex64::new(t, 0.0);
    }
    let p = p as f64;
    Complex64::from_polar((t * p).sin() / p, -t * p)
}

/// `|K(t, p)|^2 / c`: `sin^2(tp)/p^2`, and `t^2` at `p = 0`.
pub fn kernel_weight(t: f64, p: i64) -> f64 {
    if p == 0 {
        t * t
    } else {
        let p = p as f64;
        let s = (t * p).sin() / p;
        s * s
    }
}

fn check_mode(n: FrequencyIndex) -> Result<()> {
    if n.is_zero() {
        Err(Error::ZeroMode)
    } else {
        Ok(())
    }
}

/// Second-iterate coefficient at `(t, n)` for the data in `field`.
pub fn second_iterate_from_field(
    field: &SpectralField,
    t: f64,
    n: FrequencyIndex,
) -> Result<Complex64> {
    check_mode(n)?;
    let disc = field.disc();
    let amps = field.amplitudes();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &k) in disc.points().iter().enumerate() {
        if let Some(j) = disc.position(n + k) {
            acc += amps[j] * amps[i].conj() * time_kernel(t, n.dot(k));
        }
    }
    Ok(acc * Complex64::from_polar(1.0, -t * n.norm_sq() as f64))
}

/// Second-iterate coefficient for the data sampled from `seed`.
pub fn second_iterate_coeff(
    alpha: f64,
    truncation: u32,
    t: f64,
    n: FrequencyIndex,
    seed: GaussianSeed,
) -> Result<Complex64> {
    check_mode(n)?;
    check_truncation(truncation)?;
    let field = sample_data_on(seed, alpha, Arc::new(Disc::new(truncation)));
    second_iterate_from_field(&field, t, n)
}

/// Coefficients for seeds `base.offset(0..samples)`, in seed order.
pub fn second_iterate_samples(
    alpha: f64,
    truncation: u32,
    t: f64,
    n: FrequencyIndex,
    base: GaussianSeed,
    samples: usize,
) -> Result<Vec<Complex64>> {
    check_mode(n)?;
    check_truncation(truncation)?;
    let disc = Arc::new(Disc::new(truncation));
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let field = sample_data_on(base.offset(i), alpha, disc.clone());
            second_iterate_from_field(&field, t, n)
        })
        .collect()
}

fn check_truncation(truncation: u32) -> Result<()> {
    if truncation == 0 {
        Err(Error::InvalidInput("truncation N must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// Disc points ordered by nondecreasing `|k|`, ties lexicographic.
fn points_by_radius(truncation: u32) -> Vec<FrequencyIndex> {
    let mut pts = truncation_set(truncation, TruncationMode::Euclidean);
    pts.sort_by_key(|p| (p.norm_sq(), *p));
    pts
}

/// Exact second moment with an explicit kernel constant `c`.
pub fn variance_with_constant(
    alpha: f64,
    truncation: u32,
    t: f64,
    n: FrequencyIndex,
    constant: f64,
) -> Result<f64> {
    check_mode(n)?;
    check_truncation(truncation)?;
    let r2 = truncation as i64 * truncation as i64;
    let mut acc = KahanSum::new();
    for k in points_by_radius(truncation) {
        let nk = n + k;
        if nk.norm_sq() > r2 {
            continue;
        }
        let w = ((1.0 + nk.norm_sq() as f64) * (1.0 + k.norm_sq() as f64)).powf(alpha - 1.0);
        acc.add(w * kernel_weight(t, n.dot(k)));
    }
    Ok(constant * acc.value())
}

/// `E|z2(t, n)|^2` for truncation `N`, using the calibrated kernel constant.
pub fn variance_exact(alpha: f64, truncation: u32, t: f64, n: FrequencyIndex) -> Result<f64> {
    variance_with_constant(alpha, truncation, t, n, kernel_constant())
}

/// Settings of the one-time kernel-constant calibration.
pub mod calibration {
    use crate::lattice::FrequencyIndex;

    pub const SAMPLES: usize = 100_000;
    pub const TRUNCATION: u32 = 4;
    pub const MASTER_SEED: u64 = 0xCA11_B8A7_E000_0001;
    pub const ALPHA: f64 = 0.75;
    pub const TIME: f64 = 1.0;
    pub const MODE: FrequencyIndex = FrequencyIndex::new(1, 0);
    pub const CANDIDATES: [f64; 2] = [1.0, 2.0];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCalibration {
    /// The selected constant `c`.
    pub constant: f64,
    /// Monte Carlo mean of `|z2|^2`.
    pub empirical_mean: f64,
    pub std_error: f64,
    /// The exact sum with `c = 1`.
    pub unit_sum: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub truncation: u32,
}

/// Runs the calibration with an explicit sample budget and seed.
pub fn calibrate_kernel_constant(samples: usize, master_seed: u64) -> Result<KernelCalibration> {
    use calibration::*;
    let draws = second_iterate_samples(
        ALPHA,
        TRUNCATION,
        TIME,
        MODE,
        GaussianSeed::new(master_seed),
        samples,
    )?;
    let sq: Vec<f64> = draws.iter().map(|z| z.norm_sqr()).collect();
    let est = mean_estimate(&sq);
    let unit_sum = variance_with_constant(ALPHA, TRUNCATION, TIME, MODE, 1.0)?;
    let ratio = est.mean / unit_sum;
    let constant = CANDIDATES
        .iter()
        .copied()
        .min_by(|a, b| {
            (ratio / a).ln().abs().total_cmp(&(ratio / b).ln().abs())
        })
        .expect("candidate list is non-empty");
    Ok(KernelCalibration {
        constant,
        empirical_mean: est.mean,
        std_error: est.std_error,
        unit_sum,
        samples,
        master_seed,
        truncation: TRUNCATION,
    })
}

/// The calibration record, computed on first use and cached for the process.
pub fn kernel_calibration() -> &'static KernelCalibration {
    static CAL: OnceLock<KernelCalibration> = OnceLock::new();
    CAL.get_or_init(|| {
        calibrate_kernel_constant(calibration::SAMPLES, calibration::MASTER_SEED)
            .expect("calibration parameters are valid")
    })
}

pub fn kernel_constant() -> f64 {
    kernel_calibration().constant
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Primitive direction `k'` of the resonant line `{k : n.k = 0}`.
pub fn resonant_direction(n: FrequencyIndex) -> Result<FrequencyIndex> {
    check_mode(n)?;
    let g = gcd(n.n1 as i64, n.n2 as i64) as i32;
    Ok(FrequencyIndex::new(-n.n2 / g, n.n1 / g))
}

/// The `n.k = 0` part of [`variance_exact`]: `c t^2 sum_a <n+ak'>^{2a-2} <ak'>^{2a-2}`.
pub fn resonant_line_sum(alpha: f64, truncation: u32, t: f64, n: FrequencyIndex) -> Result<f64> {
    resonant_line_sum_with_constant(alpha, truncation, t, n, kernel_constant())
}

pub fn resonant_line_sum_with_constant(
    alpha: f64,
    truncation: u32,
    t: f64,
    n: FrequencyIndex,
    constant: f64,
) -> Result<f64> {
    let dir = resonant_direction(n)?;
    check_truncation(truncation)?;
    let r2 = truncation as i64 * truncation as i64;
    let admissible = |a: i32| -> Option<f64> {
        let k = dir.scale(a);
        let nk = n + k;
        (k.norm_sq() <= r2 && nk.norm_sq() <= r2).then(|| {
            ((1.0 + nk.norm_sq() as f64) * (1.0 + k.norm_sq() as f64)).powf(alpha - 1.0)
        })
    };
    let max_a = (truncation as f64 / dir.norm()).floor() as i32 + 1;
    let mut acc = KahanSum::new();
    if let Some(w) = admissible(0) {
        acc.add(w);
    }
    for a in 1..=max_a {
        for s in [a, -a] {
            if let Some(w) = admissible(s) {
                acc.add(w);
            }
        }
    }
    Ok(constant * t * t * acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Diverges,
    Converges,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Diverges => "DIVERGES",
            Verdict::Converges => "CONVERGES",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceVerdict {
    pub verdict: Verdict,
    pub threshold_used: f64,
    pub dimension: u32,
}

/// Second-moment divergence of the Picard second iterate on `T^d`.
///
/// `|u|^2`: diverges iff `alpha >= 5/4 - d/4`; on `T^2` the threshold is
/// sharp, so below it the verdict is `Converges`. `u^2` and `conj(u)^2`:
/// diverges iff `alpha >= 2 - d/4`. Everything else is `Unknown`.
pub fn divergence_verdict(
    alpha: f64,
    dimension: u32,
    nonlinearity: Nonlinearity,
) -> Result<DivergenceVerdict> {
    if !(1..=3).contains(&dimension) {
        return Err(Error::UnsupportedDimension(dimension));
    }
    let d = dimension as f64;
    let (threshold, sharp) = match nonlinearity {
        Nonlinearity::Abs2 => (1.25 - d / 4.0, dimension == 2),
        Nonlinearity::Square | Nonlinearity::ConjSquare => (2.0 - d / 4.0, false),
    };
    let verdict = if alpha >= threshold {
        Verdict::Diverges
    } else if sharp {
        Verdict::Converges
    } else {
        Verdict::Unknown
    };
    Ok(DivergenceVerdict {
        verdict,
        threshold_used: threshold,
        dimension,
    })
}

/// Probabilistic scaling critical regularity `2 - d/2`, the same for all
/// three quadratic nonlinearities.
pub fn scaling_critical(_nonlinearity: Nonlinearity, dimension: u32) -> f64 {
    2.0 - dimension as f64 / 2.0
}

fn in_shell(n: FrequencyIndex, big_n: i64) -> bool {
    let r2 = n.norm_sq();
    big_n * big_n < 4 * (1 + r2) && 1 + r2 <= big_n * big_n
}

/// Shell sum `sum <n>^{-2a} <m>^{-2} <n1>^{2a-2} <n2>^{2a-2}` over
/// `n1 - n2 = n` with all three in the dyadic shell of scale `N`.
pub fn shell_scaling_sum(alpha: f64, scale: u32) -> f64 {
    let big_n = scale as i64;
    let shell = truncation_set(scale, TruncationMode::DyadicShell);
    let max_r2 = (big_n * big_n) as usize;
    let out_weight: Vec<f64> = (0..=max_r2).map(|r| (1.0 + r as f64).powf(-alpha)).collect();
    let in_weight: Vec<f64> = shell
        .iter()
        .map(|p| (1.0 + p.norm_sq() as f64).powf(alpha - 1.0))
        .collect();
    let partials: Vec<f64> = shell
        .par_iter()
        .enumerate()
        .map(|(i, &n1)| {
            let mut acc = KahanSum::new();
            for (j, &n2) in shell.iter().enumerate() {
                let n = n1 - n2;
                if !in_shell(n, big_n) {
                    continue;
                }
                let m = (n.norm_sq() - n1.norm_sq() + n2.norm_sq()) as f64;
                acc.add(
                    out_weight[n.norm_sq() as usize] / (1.0 + m * m) * in_weight[i] * in_weight[j],
                );
            }
            acc.value()
        })
        .collect();
    partials.into_iter().collect::<KahanSum>().value()
}

/// `log2` growth of [`shell_scaling_sum`] from scale `N` to `2N`.
pub fn scaling_exponent_audit(alpha: f64, scale: u32) -> Result<f64> {
    if scale < 8 || !scale.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "scale must be a power of two >= 8, got {scale}"
        )));
    }
    let lo = shell_scaling_sum(alpha, scale);
    let hi = shell_scaling_sum(alpha, 2 * scale);
    Ok((hi / lo).log2())
}

/// `1/1296`, the anti-concentration floor for second-order chaos.
pub const PALEY_ZYGMUND_FLOOR: f64 = 1.0 / 1296.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    /// Fraction of samples with `|X|^2 > mean|X|^2 / 2`.
    pub empirical_fraction: f64,
    pub pz_lower_bound: f64,
    pub mean_square: f64,
    /// Empirical `(E|X|^2)^2 / (4 E|X|^4)`.
    pub moment_bound: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Paley–Zygmund check of a sample; `pass` iff the fraction reaches `threshold_prob`.
pub fn tightness_test(values: &[Complex64], threshold_prob: f64) -> Result<TightnessReport> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sq: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
    let mean_square = sq.iter().copied().collect::<KahanSum>().value() / sq.len() as f64;
    let fourth = sq.iter().map(|x| x * x).collect::<KahanSum>().value() / sq.len() as f64;
    let above = sq.iter().filter(|&&x| x > mean_square / 2.0).count();
    let empirical_fraction = above as f64 / sq.len() as f64;
    Ok(TightnessReport {
        empirical_fraction,
        pz_lower_bound: threshold_prob,
        mean_square,
        moment_bound: mean_square * mean_square / (4.0 * fourth),
        samples: sq.len(),
        pass: empirical_fraction >= threshold_prob,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Statistic {
    ExactVariance,
    McMean,
    ResonantSum,
    PzFraction,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::ExactVariance => "EXACT_VARIANCE",
            Statistic::McMean => "MC_MEAN",
            Statistic::ResonantSum => "RESONANT_SUM",
            Statistic::PzFraction => "PZ_FRACTION",
        })
    }
}

impl FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EXACT_VARIANCE" => Ok(Statistic::ExactVariance),
            "MC_MEAN" => Ok(Statistic::McMean),
            "RESONANT_SUM" => Ok(Statistic::ResonantSum),
            "PZ_FRACTION" => Ok(Statistic::PzFraction),
            other => Err(Error::InvalidInput(format!("unknown statistic `{other}`"))),
        }
    }
}

/// One row of a Picard parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub alpha: f64,
    #[serde(rename = "N")]
    pub truncation: u32,
    pub t: f64,
    pub n: FrequencyIndex,
    pub statistic: Statistic,
    pub value: f64,
    /// Zero for exact statistics.
    pub samples: u64,
    pub seed: u64,
}

pub const SCAN_CSV_HEADER: &str = "alpha,N,t,n1,n2,statistic,value,samples,seed";

impl ScanRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            fmt_real(self.alpha),
            self.truncation,
            fmt_real(self.t),
            self.n.n1,
            self.n.n2,
            self.statistic,
            fmt_real(self.value),
            self.samples,
            self.seed
        )
    }

    /// Sort key of a sweep row: parameters first, statistic last.
    pub fn sweep_key(&self) -> (u64, u32, u64, FrequencyIndex, Statistic, u64) {
        (
            self.alpha.to_bits() ^ (1 << 63),
            self.truncation,
            self.t.to_bits() ^ (1 << 63),
            self.n,
            self.statistic,
            self.seed,
        )
    }
}

pub fn write_scan_csv<W: Write>(out: &mut W, records: &[ScanRecord]) -> std::io::Result<()> {
    writeln!(out, "{SCAN_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

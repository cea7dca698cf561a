//! Base tensors `h^m` of the resonance constraint and their partitioned norms.
//!
//! `h^m(n, n1, n2) = 1{n - n1 + n2 = 0} 1{|n|^2 - |n1|^2 + |n2|^2 = m}`, cut
//! down to a support region per axis. The norm `||h||_{B -> C}` is the largest
//! singular value of the unfolding with columns indexed by the axes in `B`
//! and rows by the axes in `C`; an empty side gives the entrywise `l^2` norm.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{line_points_in_ball, Ball};
use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::lattice::{bracket, FrequencyIndex};
use crate::random_field::{mix64, sample_gaussian, GaussianSeed};
use crate::stats::{log_log_slope, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    N,
    N1,
    N2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::N, Axis::N1, Axis::N2];

    fn index(self) -> usize {
        self as usize
    }

    fn digit(self) -> char {
        (b'0' + self as u8) as char
    }
}

/// Split of `{n, n1, n2}` into input (column) and output (row) axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    input: [bool; 3],
}

impl Partition {
    pub fn new(input: &[Axis], output: &[Axis]) -> Result<Self> {
        let mut seen = [0u8; 3];
        for a in input.iter().chain(output) {
            seen[a.index()] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidInput(
                "partition sides must be disjoint and cover n, n1, n2".into(),
            ));
        }
        let mut mask = [false; 3];
        for a in input {
            mask[a.index()] = true;
        }
        Ok(Partition { input: mask })
    }

    pub fn input_axes(&self) -> Vec<Axis> {
        Axis::ALL.into_iter().filter(|a| self.input[a.index()]).collect()
    }

    pub fn output_axes(&self) -> Vec<Axis> {
        Axis::ALL.into_iter().filter(|a| !self.input[a.index()]).collect()
    }

    /// The transposed partition.
    pub fn dual(&self) -> Self {
        Partition {
            input: self.input.map(|b| !b),
        }
    }

    pub fn has_empty_side(&self) -> bool {
        self.input.iter().all(|&b| b) || self.input.iter().all(|&b| !b)
    }

    /// All eight partitions, including the two with an empty side.
    pub fn all() -> Vec<Partition> {
        (0u8..8)
            .map(|bits| Partition {
                input: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0],
            })
            .collect()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |axes: Vec<Axis>| axes.into_iter().map(Axis::digit).collect::<String>();
        write!(f, "{}->{}", side(self.input_axes()), side(self.output_axes()))
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (lhs, rhs) = s
            .split_once("->")
            .ok_or_else(|| Error::InvalidInput(format!("partition `{s}` lacks `->`")))?;
        let axes = |part: &str| -> Result<Vec<Axis>> {
            part.trim()
                .chars()
                .map(|c| match c {
                    '0' => Ok(Axis::N),
                    '1' => Ok(Axis::N1),
                    '2' => Ok(Axis::N2),
                    other => Err(Error::InvalidInput(format!("unknown axis `{other}`"))),
                })
                .collect()
        };
        Partition::new(&axes(lhs)?, &axes(rhs)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub n: FrequencyIndex,
    pub n1: FrequencyIndex,
    pub n2: FrequencyIndex,
    pub value: Complex64,
}

impl TensorEntry {
    fn key(&self) -> (FrequencyIndex, FrequencyIndex, FrequencyIndex) {
        (self.n, self.n1, self.n2)
    }

    fn axis(&self, a: Axis) -> FrequencyIndex {
        match a {
            Axis::N => self.n,
            Axis::N1 => self.n1,
            Axis::N2 => self.n2,
        }
    }
}

/// Sparse three-index tensor on the convolution hyperplane `n - n1 + n2 = 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseTensor3 {
    entries: Vec<TensorEntry>,
    resonance: Option<i64>,
}

impl SparseTensor3 {
    /// Sorts the entries; rejects triples off the hyperplane and duplicates.
    pub fn from_entries(mut entries: Vec<TensorEntry>) -> Result<Self> {
        for e in &entries {
            if e.n - e.n1 + e.n2 != FrequencyIndex::ZERO {
                return Err(Error::ConvolutionConstraint {
                    n: e.n,
                    n1: e.n1,
                    n2: e.n2,
                });
            }
        }
        entries.sort_by_key(|e| e.key());
        if entries.windows(2).any(|w| w[0].key() == w[1].key()) {
            return Err(Error::InvalidInput("duplicate tensor entry".into()));
        }
        Ok(SparseTensor3 {
            entries,
            resonance: None,
        })
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `m` for a base tensor.
    pub fn resonance(&self) -> Option<i64> {
        self.resonance
    }

    pub fn support(&self) -> impl Iterator<Item = (FrequencyIndex, FrequencyIndex, FrequencyIndex)> + '_ {
        self.entries.iter().map(|e| e.key())
    }

    pub fn get(&self, n: FrequencyIndex, n1: FrequencyIndex, n2: FrequencyIndex) -> Complex64 {
        self.entries
            .binary_search_by_key(&(n, n1, n2), |e| e.key())
            .map(|i| self.entries[i].value)
            .unwrap_or_default()
    }

    /// Entrywise map; the resonance tag is kept.
    pub fn map_values(&self, mut f: impl FnMut(&TensorEntry) -> Complex64) -> Self {
        SparseTensor3 {
            entries: self
                .entries
                .iter()
                .map(|e| TensorEntry { value: f(e), ..*e })
                .collect(),
            resonance: self.resonance,
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&TensorEntry) -> bool) -> Self {
        SparseTensor3 {
            entries: self.entries.iter().filter(|e| keep(e)).copied().collect(),
            resonance: self.resonance,
        }
    }
}

/// Support region for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Ball(Ball),
    /// Dyadic shell `N/2 < <n> <= N`.
    Shell(u32),
    Point(FrequencyIndex),
}

impl Region {
    pub fn contains(&self, x: FrequencyIndex) -> bool {
        match *self {
            Region::Ball(b) => b.contains(x),
            Region::Shell(scale) => {
                let s = scale as i64;
                let b = 1 + x.norm_sq();
                s * s < 4 * b && b <= s * s
            }
            Region::Point(p) => x == p,
        }
    }

    /// A lattice ball containing the region.
    pub fn bounding_ball(&self) -> Ball {
        match *self {
            Region::Ball(b) => b,
            Region::Shell(scale) => Ball::origin(scale),
            Region::Point(p) => Ball::new(p, 0),
        }
    }

    pub fn points(&self) -> Vec<FrequencyIndex> {
        self.bounding_ball()
            .points()
            .into_iter()
            .filter(|&x| self.contains(x))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSpec {
    /// Regions for `n`, `n1`, `n2`.
    pub regions: [Region; 3],
    /// Drop entries whose `n`, `n1` or `n2` is zero.
    pub exclude_zero: [bool; 3],
    /// Drop pairings `n1 = n2`.
    pub exclude_pairing: bool,
}

impl SupportSpec {
    /// Origin-centered balls of radii `(N, N1, N2)`.
    pub fn balls(radii: (u32, u32, u32)) -> Self {
        SupportSpec {
            regions: [
                Region::Ball(Ball::origin(radii.0)),
                Region::Ball(Ball::origin(radii.1)),
                Region::Ball(Ball::origin(radii.2)),
            ],
            exclude_zero: [false; 3],
            exclude_pairing: false,
        }
    }

    pub fn excluding_zero(mut self, axis: Axis) -> Self {
        self.exclude_zero[axis.index()] = true;
        self
    }

    pub fn excluding_pairings(mut self) -> Self {
        self.exclude_pairing = true;
        self
    }

    fn admits(&self, n: FrequencyIndex, n1: FrequencyIndex, n2: FrequencyIndex) -> bool {
        let pts = [n, n1, n2];
        (0..3).all(|i| self.regions[i].contains(pts[i]) && !(self.exclude_zero[i] && pts[i].is_zero()))
            && !(self.exclude_pairing && n1 == n2)
    }
}

/// Candidate-pair budget of [`build_base_tensor`].
pub const TENSOR_BUDGET: u64 = 10_000_000;

/// Indicator tensor of the constraint set for resonance `m` on `spec`.
pub fn build_base_tensor(m: i64, spec: &SupportSpec) -> Result<SparseTensor3> {
    let ns = spec.regions[0].points();
    let b2 = spec.regions[2].bounding_ball();
    let line_len = 2 * b2.radius as u64 + 1;
    let candidates = ns.len() as u64 * line_len + b2.points().len() as u64;
    if candidates > TENSOR_BUDGET {
        return Err(Error::BudgetExceeded {
            candidates,
            budget: TENSOR_BUDGET,
        });
    }
    let one = Complex64::new(1.0, 0.0);
    let mut entries = Vec::new();
    if m % 2 == 0 {
        let half = -m / 2;
        for n in ns {
            let n2s = if n.is_zero() {
                if half != 0 {
                    continue;
                }
                b2.points()
            } else {
                line_points_in_ball(n, half, b2)
            };
            for n2 in n2s {
                let n1 = n + n2;
                if spec.admits(n, n1, n2) {
                    entries.push(TensorEntry { n, n1, n2, value: one });
                }
            }
        }
    }
    let mut t = SparseTensor3::from_entries(entries)?;
    t.resonance = Some(m);
    Ok(t)
}

pub fn frobenius_norm(t: &SparseTensor3) -> f64 {
    t.entries.iter().map(|e| e.value.norm_sqr()).sum::<f64>().sqrt()
}

/// Matrix unfolding: `(row, col, value)` triples with compact indices.
#[derive(Debug, Clone)]
struct Unfolding {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

type AxisKey = [FrequencyIndex; 3];

fn project(e: &TensorEntry, axes: &[Axis]) -> AxisKey {
    let mut key = [FrequencyIndex::ZERO; 3];
    for (slot, &a) in key.iter_mut().zip(axes) {
        *slot = e.axis(a);
    }
    key
}

fn unfold(t: &SparseTensor3, p: &Partition) -> Unfolding {
    let (ins, outs) = (p.input_axes(), p.output_axes());
    let mut row_ids: HashMap<AxisKey, usize> = HashMap::new();
    let mut col_ids: HashMap<AxisKey, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(t.nnz());
    for e in &t.entries {
        let nr = row_ids.len();
        let r = *row_ids.entry(project(e, &outs)).or_insert(nr);
        let nc = col_ids.len();
        let c = *col_ids.entry(project(e, &ins)).or_insert(nc);
        entries.push((r, c, e.value));
    }
    Unfolding {
        rows: row_ids.len(),
        cols: col_ids.len(),
        entries,
    }
}

/// Connected blocks of the bipartite row/column graph.
fn blocks(u: &Unfolding) -> Vec<Unfolding> {
    let mut parent: Vec<usize> = (0..u.rows + u.cols).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(r, c, _) in &u.entries {
        let (a, b) = (find(&mut parent, r), find(&mut parent, u.rows + c));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut block_of: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<(HashMap<usize, usize>, HashMap<usize, usize>, Unfolding)> = Vec::new();
    for &(r, c, v) in &u.entries {
        let root = find(&mut parent, r);
        let nb = block_of.len();
        let b = *block_of.entry(root).or_insert(nb);
        if b == out.len() {
            out.push((
                HashMap::new(),
                HashMap::new(),
                Unfolding {
                    rows: 0,
                    cols: 0,
                    entries: Vec::new(),
                },
            ));
        }
        let (rmap, cmap, blk) = &mut out[b];
        let nr = rmap.len();
        let lr = *rmap.entry(r).or_insert(nr);
        let nc = cmap.len();
        let lc = *cmap.entry(c).or_insert(nc);
        blk.rows = rmap.len();
        blk.cols = cmap.len();
        blk.entries.push((lr, lc, v));
    }
    out.into_iter().map(|(_, _, b)| b).collect()
}

pub const POWER_ITERATION_CAP: usize = 500;
pub const POWER_ITERATION_SEED: u64 = 0x7E45_0125_5EED_0001;

fn start_vector(len: usize, seed: u64) -> Vec<Complex64> {
    (0..len)
        .map(|i| {
            let u = (mix64(seed ^ mix64(i as u64)) >> 11) as f64 / (1u64 << 53) as f64;
            Complex64::new(0.5 + u, 0.0)
        })
        .collect()
}

fn normalize(x: &mut [Complex64]) -> f64 {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in x.iter_mut() {
            *z /= norm;
        }
    }
    norm
}

struct PowerOutcome {
    lambda: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    iterate: Vec<Complex64>,
}

/// Power iteration on `A* A`; stops once the geometric tail of the
/// Rayleigh-quotient increments drops below `tol` relative.
fn power_iteration(u: &Unfolding, tol: f64, seed: u64) -> PowerOutcome {
    let mut x = start_vector(u.cols, seed);
    normalize(&mut x);
    let mut y = vec![Complex64::default(); u.rows];
    let mut z = vec![Complex64::default(); u.cols];
    let mut lambda = 0.0;
    let mut prev_delta = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_ITERATION_CAP {
        y.iter_mut().for_each(|v| *v = Complex64::default());
        for &(r, c, v) in &u.entries {
            y[r] += v * x[c];
        }
        let new_lambda = y.iter().map(|v| v.norm_sqr()).sum::<f64>();
        z.iter_mut().for_each(|v| *v = Complex64::default());
        for &(r, c, v) in &u.entries {
            z[c] += v.conj() * y[r];
        }
        residual = z
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b * new_lambda).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / new_lambda.max(f64::MIN_POSITIVE);
        let delta = (new_lambda - lambda).abs();
        lambda = new_lambda;
        std::mem::swap(&mut x, &mut z);
        if normalize(&mut x) == 0.0 {
            return PowerOutcome {
                lambda: 0.0,
                iterations: it,
                residual: 0.0,
                converged: true,
                iterate: x,
            };
        }
        let rate = if prev_delta.is_finite() && prev_delta > 0.0 {
            (delta / prev_delta).min(1.0)
        } else {
            1.0
        };
        let tail = if rate < 1.0 { delta * rate / (1.0 - rate) } else { f64::INFINITY };
        if it > 1 && (delta == 0.0 || residual <= tol || tail <= tol * lambda) {
            return PowerOutcome {
                lambda,
                iterations: it,
                residual,
                converged: true,
                iterate: x,
            };
        }
        prev_delta = delta;
    }
    PowerOutcome {
        lambda,
        iterations: POWER_ITERATION_CAP,
        residual,
        converged: false,
        iterate: x,
    }
}

fn block_norm(b: &Unfolding, tol: f64, seed: u64) -> Result<f64> {
    if b.rows == 1 || b.cols == 1 {
        // rank one
        return Ok(b.entries.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt());
    }
    let first = power_iteration(b, tol, seed);
    if first.converged {
        return Ok(first.lambda.sqrt());
    }
    let second = power_iteration(b, tol, mix64(seed ^ 0x5245_5354_4152_5421));
    if second.converged {
        return Ok(second.lambda.sqrt());
    }
    Err(Error::NonConvergence {
        iterations: first.iterations + second.iterations,
        residual: second.residual,
        estimate: second.lambda.sqrt(),
        last_iterate: second.iterate,
    })
}

/// `||t||_{B -> C}`: largest singular value of the unfolding, or the
/// Frobenius norm when a side is empty.
pub fn operator_norm(t: &SparseTensor3, partition: &Partition, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if partition.has_empty_side() {
        return Ok(frobenius_norm(t));
    }
    unfolding_norm(&unfold(t, partition), tol)
}

fn unfolding_norm(u: &Unfolding, tol: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (i, b) in blocks(u).iter().enumerate() {
        best = best.max(block_norm(b, tol, POWER_ITERATION_SEED ^ i as u64)?);
    }
    Ok(best)
}

/// `sqrt(max row l1 mass * max column l1 mass)` of the unfolding.
pub fn schur_bound(t: &SparseTensor3, partition: &Partition) -> Result<f64> {
    for (i, e) in t.entries.iter().enumerate() {
        if e.value.re < 0.0 || e.value.im != 0.0 {
            return Err(Error::NegativeEntry { index: i });
        }
    }
    let u = unfold(t, partition);
    let mut rows = vec![0.0; u.rows];
    let mut cols = vec![0.0; u.cols];
    for &(r, c, v) in &u.entries {
        rows[r] += v.re;
        cols[c] += v.re;
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok((max(&rows) * max(&cols)).sqrt())
}

/// The four deterministic estimates on the base tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimate {
    /// Frobenius norm.
    #[serde(rename = "012")]
    Full,
    /// `n1 -> (n, n2)`.
    #[serde(rename = "1-02")]
    FromN1,
    /// `n2 -> (n, n1)` with `n2 != 0`.
    #[serde(rename = "2-01")]
    FromN2,
    /// `n -> (n1, n2)` with `n != 0`.
    #[serde(rename = "0-12")]
    FromN,
}

impl Estimate {
    pub const ALL: [Estimate; 4] = [Estimate::Full, Estimate::FromN1, Estimate::FromN2, Estimate::FromN];

    pub fn partition(self) -> Partition {
        let p = |i: &[Axis], o: &[Axis]| Partition::new(i, o).expect("static partition");
        match self {
            Estimate::Full => p(&[], &Axis::ALL),
            Estimate::FromN1 => p(&[Axis::N1], &[Axis::N, Axis::N2]),
            Estimate::FromN2 => p(&[Axis::N2], &[Axis::N, Axis::N1]),
            Estimate::FromN => p(&[Axis::N], &[Axis::N1, Axis::N2]),
        }
    }

    /// Axis whose zero mode is removed for this estimate.
    pub fn excluded_zero(self) -> Option<Axis> {
        match self {
            Estimate::FromN2 => Some(Axis::N2),
            Estimate::FromN => Some(Axis::N),
            _ => None,
        }
    }

    /// Right-hand side at radii `(N, N1, N2)`.
    pub fn bound(self, epsilon: f64, radii: (u32, u32, u32)) -> f64 {
        let (n, n1, n2) = (radii.0 as f64, radii.1 as f64, radii.2 as f64);
        match self {
            Estimate::Full => (n1 * n2).sqrt() * n1.max(n2).powf(epsilon),
            Estimate::FromN1 => n.max(n2).powf(epsilon),
            Estimate::FromN2 => n.min(n1).sqrt(),
            Estimate::FromN => n1.min(n2).sqrt(),
        }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimate::Full => "012",
            Estimate::FromN1 => "1-02",
            Estimate::FromN2 => "2-01",
            Estimate::FromN => "0-12",
        })
    }
}

impl FromStr for Estimate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "012" => Ok(Estimate::Full),
            "1-02" => Ok(Estimate::FromN1),
            "2-01" => Ok(Estimate::FromN2),
            "0-12" => Ok(Estimate::FromN),
            other => Err(Error::InvalidInput(format!("unknown estimate `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimate: Estimate,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "N1")]
    pub n1: u32,
    #[serde(rename = "N2")]
    pub n2: u32,
    pub m: i64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub schur: f64,
    /// `| ||h||_{B->C} - ||h||_{C->B} |` relative to the norm.
    pub duality_gap: f64,
}

pub const ESTIMATE_CSV_HEADER: &str = "estimate,N,N1,N2,m,lhs,rhs,ratio";

impl EstimateRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.estimate,
            self.n,
            self.n1,
            self.n2,
            self.m,
            fmt_real(self.lhs),
            fmt_real(self.rhs),
            fmt_real(self.ratio)
        )
    }
}

pub fn write_estimate_csv<W: Write>(out: &mut W, rows: &[EstimateRow]) -> std::io::Result<()> {
    writeln!(out, "{ESTIMATE_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub const NORM_TOLERANCE: f64 = 1e-8;

/// All four estimates at one scale, on origin-centered balls.
pub fn verify_deterministic_estimates(
    radii: (u32, u32, u32),
    m: i64,
    epsilon: f64,
) -> Result<Vec<EstimateRow>> {
    let base = build_base_tensor(m, &SupportSpec::balls(radii))?;
    Estimate::ALL
        .iter()
        .map(|&est| {
            let t = match est.excluded_zero() {
                Some(axis) => base.filter(|e| !e.axis(axis).is_zero()),
                None => base.clone(),
            };
            let p = est.partition();
            let lhs = operator_norm(&t, &p, NORM_TOLERANCE)?;
            let dual = operator_norm(&t, &p.dual(), NORM_TOLERANCE)?;
            let rhs = est.bound(epsilon, radii);
            Ok(EstimateRow {
                estimate: est,
                n: radii.0,
                n1: radii.1,
                n2: radii.2,
                m,
                lhs,
                rhs,
                ratio: lhs / rhs,
                schur: schur_bound(&t, &p)?,
                duality_gap: (lhs - dual).abs() / lhs.max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

/// Cross-scale behavior of one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateTrend {
    pub estimate: Estimate,
    /// `(max ratio - min ratio) / min ratio` across scales.
    pub drift: f64,
    /// Log-log slope of the ratio against the largest radius.
    pub slope: f64,
    /// Log-log slope of the norm itself.
    pub norm_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateScan {
    pub rows: Vec<EstimateRow>,
    pub trends: Vec<EstimateTrend>,
}

/// [`verify_deterministic_estimates`] over several scales, with drift and slope fits.
pub fn scan_deterministic_estimates(
    scales: &[(u32, u32, u32)],
    m: i64,
    epsilon: f64,
) -> Result<EstimateScan> {
    let per_scale: Vec<Vec<EstimateRow>> = scales
        .par_iter()
        .map(|&r| verify_deterministic_estimates(r, m, epsilon))
        .collect::<Result<_>>()?;
    let rows: Vec<EstimateRow> = per_scale.into_iter().flatten().collect();
    let trends = Estimate::ALL
        .iter()
        .map(|&est| {
            let sel: Vec<&EstimateRow> = rows.iter().filter(|r| r.estimate == est).collect();
            let ratios: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            let xs: Vec<f64> = sel.iter().map(|r| r.n.max(r.n1).max(r.n2) as f64).collect();
            let lhs: Vec<f64> = sel.iter().map(|r| r.lhs).collect();
            let (slope, norm_slope) = if sel.len() >= 2 {
                (log_log_slope(&xs, &ratios), log_log_slope(&xs, &lhs))
            } else {
                (0.0, 0.0)
            };
            EstimateTrend {
                estimate: est,
                drift: (hi - lo) / lo,
                slope,
                norm_slope,
            }
        })
        .collect();
    Ok(EstimateScan { rows, trends })
}

/// Which random-tensor setting the probe imitates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVariant {
    /// All frequencies bounded by `M`.
    Bounded,
    /// Only `n2` bounded by `M`; the support is further cut to
    /// `|n - n1| <= M` and `||n|^2 - |n1|^2| <= M^10`.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub m: i64,
    #[serde(rename = "M")]
    pub scale: u32,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    pub variant: ProbeVariant,
    pub median_ratio: f64,
    /// `(q, ratio quantile)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    /// Max over partitions of the weighted deterministic norms.
    pub deterministic_norm: f64,
}

pub const PROBE_QUANTILES: [f64; 5] = [0.01, 0.1, 0.5, 0.9, 0.99];
pub const MIN_PROBE_TRIALS: usize = 100;

/// Weighted base tensor used by the probe: `h^m <n2>^{alpha-1}` on the support.
pub fn probe_tensor(
    m: i64,
    spec: &SupportSpec,
    alpha: f64,
    scale: u32,
    variant: ProbeVariant,
) -> Result<SparseTensor3> {
    let mut spec = *spec;
    if let Region::Ball(b) = spec.regions[2] {
        spec.regions[2] = Region::Ball(Ball::new(b.center, b.radius.min(scale)));
    }
    let h = build_base_tensor(m, &spec)?;
    let s = scale as i64;
    let h = match variant {
        ProbeVariant::Bounded => h,
        ProbeVariant::Cutoff => h.filter(|e| {
            (e.n - e.n1).norm_sq() <= s * s
                && ((e.n.norm_sq() - e.n1.norm_sq()).abs() as f64) <= (scale as f64).powi(10)
        }),
    };
    Ok(h.map_values(|e| Complex64::new(bracket(e.n2).powf(alpha - 1.0), 0.0)))
}

/// Unfolding `n -> n1` of `H_{n n1} = sum_{n2} h conj(eta_{n2})` with `eta = g / |g|`.
fn contract(h: &SparseTensor3, seed: GaussianSeed) -> Unfolding {
    let mut rows: HashMap<FrequencyIndex, usize> = HashMap::new();
    let mut cols: HashMap<FrequencyIndex, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, Complex64)> = Vec::new();
    for e in &h.entries {
        let g = sample_gaussian(seed, e.n2);
        let eta = g / g.norm();
        let nr = rows.len();
        let r = *rows.entry(e.n1).or_insert(nr);
        let nc = cols.len();
        let c = *cols.entry(e.n).or_insert(nc);
        let next = entries.len();
        let slot = *cells.entry((r, c)).or_insert(next);
        if slot == next {
            entries.push((r, c, Complex64::default()));
        }
        entries[slot].2 += e.value * eta.conj();
    }
    Unfolding {
        rows: rows.len(),
        cols: cols.len(),
        entries,
    }
}

/// Distribution of `||H||_{n -> n1}` over the max of the deterministic norms.
pub fn random_tensor_probe(
    m: i64,
    spec: &SupportSpec,
    alpha: f64,
    scale: u32,
    trials: usize,
    seed: u64,
    variant: ProbeVariant,
) -> Result<ProbeReport> {
    if trials < MIN_PROBE_TRIALS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_PROBE_TRIALS} trials required, got {trials}"
        )));
    }
    let h = probe_tensor(m, spec, alpha, scale, variant)?;
    if h.is_empty() {
        return Err(Error::EmptyInput);
    }
    let deterministic_norm = [
        Partition::new(&[Axis::N, Axis::N2], &[Axis::N1])?,
        Partition::new(&[Axis::N], &[Axis::N1, Axis::N2])?,
    ]
    .iter()
    .map(|p| operator_norm(&h, p, NORM_TOLERANCE))
    .collect::<Result<Vec<f64>>>()?
    .into_iter()
    .fold(0.0, f64::max);
    let base = GaussianSeed::new(seed);
    let mut ratios: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            unfolding_norm(&contract(&h, base.offset(i)), NORM_TOLERANCE)
                .map(|v| v / deterministic_norm)
        })
        .collect::<Result<_>>()?;
    ratios.sort_by(f64::total_cmp);
    Ok(ProbeReport {
        m,
        scale,
        alpha,
        trials,
        seed,
        variant,
        median_ratio: quantile(&ratios, 0.5),
        quantiles: PROBE_QUANTILES.iter().map(|&q| (q, quantile(&ratios, q))).collect(),
        deterministic_norm,
    })
}

/// Log-log slope of the median ratio against `M`.
pub fn probe_slope(reports: &[ProbeReport]) -> f64 {
    let xs: Vec<f64> = reports.iter().map(|r| r.scale as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.median_ratio).collect();
    log_log_slope(&xs, &ys)
}

//! Lattice counting for the resonance equation and the Gaussian-integer
//! divisor count.
//!
//! Tuples `(n, n1, n2)` satisfy `n - n1 + n2 = 0` and
//! `|n|^2 - |n1|^2 + |n2|^2 = m`. Substituting `n1 = n + n2` turns the second
//! equation into `-2 n.n2 = m`, so with `n` (or `n2`) fixed the free point lies
//! on a line, and with `n1` fixed `k = n - n2` lies on the circle
//! `|k|^2 = 2m + |n1|^2`. [`count_tuples`] walks those lines and circles
//! instead of looping over all triples.

use std::fmt;
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::lattice::FrequencyIndex;
use crate::stats::log_log_slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CountingCase {
    /// All three points free.
    I,
    /// `n1` fixed.
    II,
    /// `n2 != 0` fixed.
    III,
    /// `n != 0` fixed.
    IV,
}

impl CountingCase {
    pub const ALL: [CountingCase; 4] = [
        CountingCase::I,
        CountingCase::II,
        CountingCase::III,
        CountingCase::IV,
    ];
}

impl fmt::Display for CountingCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountingCase::I => "I",
            CountingCase::II => "II",
            CountingCase::III => "III",
            CountingCase::IV => "IV",
        })
    }
}

impl FromStr for CountingCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(CountingCase::I),
            "II" | "2" => Ok(CountingCase::II),
            "III" | "3" => Ok(CountingCase::III),
            "IV" | "4" => Ok(CountingCase::IV),
            other => Err(Error::InvalidInput(format!("unknown counting case `{other}`"))),
        }
    }
}

/// Closed lattice ball `{x : |x - center| <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ball {
    pub center: FrequencyIndex,
    pub radius: u32,
}

impl Ball {
    pub fn new(center: FrequencyIndex, radius: u32) -> Self {
        Ball { center, radius }
    }

    pub fn origin(radius: u32) -> Self {
        Ball::new(FrequencyIndex::ZERO, radius)
    }

    pub fn contains(&self, x: FrequencyIndex) -> bool {
        let r = self.radius as i64;
        (x - self.center).norm_sq() <= r * r
    }

    pub fn points(&self) -> Vec<FrequencyIndex> {
        let r = self.radius as i32;
        let mut out = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                let x = self.center + FrequencyIndex::new(a, b);
                if self.contains(x) {
                    out.push(x);
                }
            }
        }
        out
    }

    fn negated(&self) -> Self {
        Ball::new(-self.center, self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingQuery {
    pub case: CountingCase,
    pub m: i64,
    /// Ball for `n`, radius `N`.
    pub ball: Ball,
    /// Ball for `n1`, radius `N1`.
    pub ball1: Ball,
    /// Ball for `n2`, radius `N2`.
    pub ball2: Ball,
    /// `n1` for case II, `n2` for case III, `n` for case IV.
    pub fixed_point: Option<FrequencyIndex>,
}

impl CountingQuery {
    /// Query with all balls centered at the origin.
    pub fn centered(case: CountingCase, m: i64, radii: (u32, u32, u32)) -> Self {
        CountingQuery {
            case,
            m,
            ball: Ball::origin(radii.0),
            ball1: Ball::origin(radii.1),
            ball2: Ball::origin(radii.2),
            fixed_point: None,
        }
    }

    pub fn with_fixed(mut self, p: FrequencyIndex) -> Self {
        self.fixed_point = Some(p);
        self
    }

    /// The same query with every frequency and center negated.
    pub fn negated(&self) -> Self {
        CountingQuery {
            ball: self.ball.negated(),
            ball1: self.ball1.negated(),
            ball2: self.ball2.negated(),
            fixed_point: self.fixed_point.map(|p| -p),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.case, self.fixed_point) {
            (CountingCase::I, None) => Ok(()),
            (CountingCase::I, Some(_)) => Err(Error::InvalidInput(
                "case I takes no fixed point".into(),
            )),
            (_, None) => Err(Error::InvalidInput(format!(
                "case {} requires a fixed point",
                self.case
            ))),
            (CountingCase::III, Some(p)) if p.is_zero() => {
                Err(Error::ExcludedZero { axis: "n2" })
            }
            (CountingCase::IV, Some(p)) if p.is_zero() => Err(Error::ExcludedZero { axis: "n" }),
            _ => Ok(()),
        }
    }
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Lattice points `x` in `ball` with `a.x = c`; `a` must be nonzero.
pub fn line_points_in_ball(a: FrequencyIndex, c: i64, ball: Ball) -> Vec<FrequencyIndex> {
    debug_assert!(!a.is_zero());
    let (p, q) = (a.n1 as i64, a.n2 as i64);
    let (g0, x, y) = ext_gcd(p.abs(), q.abs());
    if c % g0 != 0 {
        return Vec::new();
    }
    let (x, y) = (x * p.signum(), y * q.signum());
    let scale = c / g0;
    // base point and direction of the solution line
    let (b1, b2) = (x * scale, y * scale);
    let (d1, d2) = (-q / g0, p / g0);
    let (e1, e2) = (b1 - ball.center.n1 as i64, b2 - ball.center.n2 as i64);
    let dd = (d1 * d1 + d2 * d2) as f64;
    let de = (d1 * e1 + d2 * e2) as f64;
    let ee = (e1 * e1 + e2 * e2) as f64;
    let r2 = ball.radius as f64 * ball.radius as f64;
    let disc = de * de - dd * (ee - r2);
    if disc < 0.0 {
        return Vec::new();
    }
    let root = disc.sqrt();
    let lo = ((-de - root) / dd).floor() as i64 - 1;
    let hi = ((-de + root) / dd).ceil() as i64 + 1;
    let mut out = Vec::new();
    for s in lo..=hi {
        let pt = FrequencyIndex::new((b1 + s * d1) as i32, (b2 + s * d2) as i32);
        if ball.contains(pt) {
            out.push(pt);
        }
    }
    out
}

/// Points `k` with `|k|^2 = r2`, ordered by first coordinate.
pub fn circle_points(r2: i64) -> Vec<FrequencyIndex> {
    if r2 < 0 {
        return Vec::new();
    }
    if r2 == 0 {
        return vec![FrequencyIndex::ZERO];
    }
    let r = isqrt(r2);
    let mut out = Vec::new();
    for a in -r..=r {
        let rest = r2 - a * a;
        let b = isqrt(rest);
        if b * b == rest {
            out.push(FrequencyIndex::new(a as i32, -b as i32));
            if b != 0 {
                out.push(FrequencyIndex::new(a as i32, b as i32));
            }
        }
    }
    out
}

fn isqrt(x: i64) -> i64 {
    let mut r = (x as f64).sqrt() as i64;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

/// Exact number of tuples satisfying the query.
pub fn count_tuples(q: &CountingQuery) -> Result<u64> {
    q.validate()?;
    if q.m % 2 != 0 {
        return Ok(0);
    }
    let half = -q.m / 2;
    let count = match (q.case, q.fixed_point) {
        (CountingCase::I, _) => q
            .ball
            .points()
            .into_iter()
            .map(|n| count_with_n(n, half, q))
            .sum(),
        (CountingCase::IV, Some(n)) => {
            if q.ball.contains(n) {
                count_with_n(n, half, q)
            } else {
                0
            }
        }
        (CountingCase::III, Some(n2)) => {
            if !q.ball2.contains(n2) {
                0
            } else {
                line_points_in_ball(n2, half, q.ball)
                    .into_iter()
                    .filter(|&n| q.ball1.contains(n + n2))
                    .count() as u64
            }
        }
        (CountingCase::II, Some(n1)) => {
            if !q.ball1.contains(n1) {
                0
            } else {
                // k = n - n2 with n + n2 = n1, |k|^2 = 2m + |n1|^2
                circle_points(2 * q.m + n1.norm_sq())
                    .into_iter()
                    .filter(|k| (k.n1 - n1.n1) % 2 == 0 && (k.n2 - n1.n2) % 2 == 0)
                    .filter(|&k| {
                        let n = FrequencyIndex::new((n1.n1 + k.n1) / 2, (n1.n2 + k.n2) / 2);
                        q.ball.contains(n) && q.ball2.contains(n1 - n)
                    })
                    .count() as u64
            }
        }
        _ => unreachable!("validated above"),
    };
    Ok(count)
}

/// Tuples with `n` fixed and `n.n2 = half`.
fn count_with_n(n: FrequencyIndex, half: i64, q: &CountingQuery) -> u64 {
    if n.is_zero() {
        if half != 0 {
            return 0;
        }
        return q
            .ball2
            .points()
            .into_iter()
            .filter(|&n2| q.ball1.contains(n2))
            .count() as u64;
    }
    line_points_in_ball(n, half, q.ball2)
        .into_iter()
        .filter(|&n2| q.ball1.contains(n + n2))
        .count() as u64
}

/// Gaussian integer `re + i im`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GaussianInt {
    pub re: i64,
    pub im: i64,
}

impl GaussianInt {
    pub const fn new(re: i64, im: i64) -> Self {
        GaussianInt { re, im }
    }

    pub fn norm(self) -> i64 {
        self.re * self.re + self.im * self.im
    }

    pub fn conj(self) -> Self {
        GaussianInt::new(self.re, -self.im)
    }

    pub fn is_zero(self) -> bool {
        self.re == 0 && self.im == 0
    }

    /// `self / d` when `d` divides `self`.
    pub fn div_exact(self, d: GaussianInt) -> Option<GaussianInt> {
        if d.is_zero() {
            return None;
        }
        let num = self * d.conj();
        let den = d.norm();
        (num.re % den == 0 && num.im % den == 0).then(|| GaussianInt::new(num.re / den, num.im / den))
    }
}

impl Add for GaussianInt {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        GaussianInt::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for GaussianInt {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        GaussianInt::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for GaussianInt {
    type Output = Self;
    fn neg(self) -> Self {
        GaussianInt::new(-self.re, -self.im)
    }
}

impl Mul for GaussianInt {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        GaussianInt::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

impl fmt::Display for GaussianInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.re, self.im)
    }
}

impl FromStr for GaussianInt {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let n: FrequencyIndex = s.parse()?;
        Ok(GaussianInt::new(n.n1 as i64, n.n2 as i64))
    }
}

/// Number of `(a, b)` with `ab = m`, `|a - a0| <= m1`, `|b - b0| <= m2`.
///
/// Candidates `a` range over the box around `a0` clipped to `|a| <= |m|`.
pub fn gaussian_divisor_count(
    m: GaussianInt,
    a0: GaussianInt,
    b0: GaussianInt,
    m1: f64,
    m2: f64,
) -> Result<u64> {
    if m.is_zero() {
        return Err(Error::InvalidInput("m must be a nonzero Gaussian integer".into()));
    }
    if !(m1 >= 0.0 && m2 >= 0.0) {
        return Err(Error::InvalidInput("box radii must be nonnegative".into()));
    }
    let reach = isqrt(m.norm()) + 1;
    let lo_re = (a0.re as f64 - m1).ceil().max(-reach as f64) as i64;
    let hi_re = (a0.re as f64 + m1).floor().min(reach as f64) as i64;
    let lo_im = (a0.im as f64 - m1).ceil().max(-reach as f64) as i64;
    let hi_im = (a0.im as f64 + m1).floor().min(reach as f64) as i64;
    let within = |z: GaussianInt, c: GaussianInt, r: f64| ((z - c).norm() as f64) <= r * r;
    let mut count = 0;
    for re in lo_re..=hi_re {
        for im in lo_im..=hi_im {
            let a = GaussianInt::new(re, im);
            if a.is_zero() || !within(a, a0, m1) {
                continue;
            }
            if let Some(b) = m.div_exact(a) {
                if within(b, b0, m2) {
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

/// Right-hand side of the counting estimate for `case` at radii `(N, N1, N2)`.
pub fn counting_bound(case: CountingCase, epsilon: f64, radii: (u32, u32, u32)) -> f64 {
    let (n, n1, n2) = (radii.0 as f64, radii.1 as f64, radii.2 as f64);
    match case {
        CountingCase::I => n1 * n2 * n1.max(n2).powf(epsilon),
        CountingCase::II => n.max(n2).powf(epsilon),
        CountingCase::III => n.min(n1),
        CountingCase::IV => n1.min(n2),
    }
}

/// Centers tried for the `n1` and `n2` balls; the `n` ball stays at the origin.
pub fn center_grid() -> [FrequencyIndex; 5] {
    [
        FrequencyIndex::new(0, 0),
        FrequencyIndex::new(1, 0),
        FrequencyIndex::new(-1, 0),
        FrequencyIndex::new(0, 1),
        FrequencyIndex::new(0, -1),
    ]
}

/// Largest count over `m` (and over the fixed point, for cases II–IV).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorstCount {
    pub m: i64,
    pub count: u64,
}

/// Dense histogram over even `m` with reset-on-demand.
struct MHistogram {
    offset: i64,
    bins: Vec<u64>,
    touched: Vec<usize>,
}

impl MHistogram {
    fn new(max_abs_m: i64) -> Self {
        MHistogram {
            offset: max_abs_m,
            bins: vec![0; (2 * max_abs_m + 1) as usize],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, m: i64) {
        let i = (m + self.offset) as usize;
        if self.bins[i] == 0 {
            self.touched.push(i);
        }
        self.bins[i] += 1;
    }

    /// Max bin, smallest `|m|` then smallest `m` on ties; clears the histogram.
    fn drain_max(&mut self) -> Option<WorstCount> {
        let mut best: Option<WorstCount> = None;
        for &i in &self.touched {
            let cand = WorstCount {
                m: i as i64 - self.offset,
                count: self.bins[i],
            };
            best = Some(match best {
                None => cand,
                Some(b) if better(cand, b) => cand,
                Some(b) => b,
            });
            self.bins[i] = 0;
        }
        self.touched.clear();
        best
    }
}

fn better(a: WorstCount, b: WorstCount) -> bool {
    (a.count, std::cmp::Reverse(a.m.abs()), std::cmp::Reverse(a.m))
        > (b.count, std::cmp::Reverse(b.m.abs()), std::cmp::Reverse(b.m))
}

fn max_worst(a: Option<WorstCount>, b: Option<WorstCount>) -> Option<WorstCount> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if better(y, x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn reach(ball: &Ball) -> i64 {
    ball.radius as i64 + ball.center.n1.unsigned_abs().max(ball.center.n2.unsigned_abs()) as i64 * 2
}

/// Worst count over every achievable `m`, scanning full histograms.
///
/// For cases II–IV the maximum is also taken over every fixed point in its ball.
pub fn worst_case_count(case: CountingCase, ball: Ball, ball1: Ball, ball2: Ball) -> Option<WorstCount> {
    let max_m = 2 * reach(&ball) * reach(&ball2) + 2;
    match case {
        CountingCase::I => {
            let mut h = MHistogram::new(max_m);
            for n in ball.points() {
                for n2 in ball2.points() {
                    if ball1.contains(n + n2) {
                        h.add(-2 * n.dot(n2));
                    }
                }
            }
            h.drain_max()
        }
        CountingCase::II => {
            // m = 2|n2|^2 - 2 n1.n2 with n = n1 - n2
            let max_m = 2 * (reach(&ball2) * reach(&ball2) + reach(&ball1) * reach(&ball2)) + 2;
            let mut h = MHistogram::new(max_m);
            let pts2 = ball2.points();
            let mut best = None;
            for n1 in ball1.points() {
                for &n2 in &pts2 {
                    if ball.contains(n1 - n2) {
                        h.add(2 * n2.norm_sq() - 2 * n1.dot(n2));
                    }
                }
                best = max_worst(best, h.drain_max());
            }
            best
        }
        CountingCase::III => {
            let mut h = MHistogram::new(max_m);
            let pts = ball.points();
            let mut best = None;
            for n2 in ball2.points().into_iter().filter(|p| !p.is_zero()) {
                for &n in &pts {
                    if ball1.contains(n + n2) {
                        h.add(-2 * n.dot(n2));
                    }
                }
                best = max_worst(best, h.drain_max());
            }
            best
        }
        CountingCase::IV => {
            let mut h = MHistogram::new(max_m);
            let pts2 = ball2.points();
            let mut best = None;
            for n in ball.points().into_iter().filter(|p| !p.is_zero()) {
                for &n2 in &pts2 {
                    if ball1.contains(n + n2) {
                        h.add(-2 * n.dot(n2));
                    }
                }
                best = max_worst(best, h.drain_max());
            }
            best
        }
    }
}

/// One audited scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub case: CountingCase,
    pub m: i64,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "N1")]
    pub n1: u32,
    #[serde(rename = "N2")]
    pub n2: u32,
    pub count: u64,
    pub bound: f64,
    pub ratio: f64,
}

pub const AUDIT_CSV_HEADER: &str = "case,m,N,N1,N2,count,bound,ratio";

impl AuditRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.case,
            self.m,
            self.n,
            self.n1,
            self.n2,
            self.count,
            fmt_real(self.bound),
            fmt_real(self.ratio)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub case: CountingCase,
    pub epsilon: f64,
    pub max_ratio: f64,
    /// Least-squares slope of `ln ratio` against `ln max(N, N1, N2)`.
    pub log_ratio_slope: f64,
    pub table: Vec<AuditRow>,
}

impl AuditReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{AUDIT_CSV_HEADER}")?;
        for r in &self.table {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Largest tuple budget per audited cell.
pub const AUDIT_BUDGET: f64 = 1e8;

/// Worst-case count over `m`, fixed points and the [`center_grid`] centers,
/// divided by [`counting_bound`], for each scale.
pub fn audit_counting_bound(
    case: CountingCase,
    epsilon: f64,
    scales: &[(u32, u32, u32)],
) -> Result<AuditReport> {
    if scales.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &(n, n1, n2) in scales {
        if n == 0 || n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInput("radii must be positive".into()));
        }
        let cells = match case {
            CountingCase::II => ball_size(n1) * ball_size(n2),
            _ => ball_size(n) * ball_size(n2),
        };
        if cells > AUDIT_BUDGET {
            return Err(Error::BudgetExceeded {
                candidates: cells as u64,
                budget: AUDIT_BUDGET as u64,
            });
        }
    }
    let grid = center_grid();
    let table: Vec<AuditRow> = scales
        .par_iter()
        .map(|&(n, n1, n2)| {
            let mut best: Option<WorstCount> = None;
            for c1 in grid {
                for c2 in grid {
                    let w = worst_case_count(
                        case,
                        Ball::origin(n),
                        Ball::new(c1, n1),
                        Ball::new(c2, n2),
                    );
                    best = max_worst(best, w);
                }
            }
            let w = best.unwrap_or(WorstCount { m: 0, count: 0 });
            let bound = counting_bound(case, epsilon, (n, n1, n2));
            AuditRow {
                case,
                m: w.m,
                n,
                n1,
                n2,
                count: w.count,
                bound,
                ratio: w.count as f64 / bound,
            }
        })
        .collect();
    let max_ratio = table.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let log_ratio_slope = if table.len() >= 2 {
        let xs: Vec<f64> = table.iter().map(|r| r.n.max(r.n1).max(r.n2) as f64).collect();
        let ys: Vec<f64> = table.iter().map(|r| r.ratio).collect();
        log_log_slope(&xs, &ys)
    } else {
        0.0
    };
    Ok(AuditReport {
        case,
        epsilon,
        max_ratio,
        log_ratio_slope,
        table,
    })
}

fn ball_size(r: u32) -> f64 {
    let r = r as f64 + 1.0;
    std::f64::consts::PI * r * r
}

/// Diagonal dyadic scales `(R, R, R)` for `R = lo, 2 lo, ..., hi`.
pub fn dyadic_diagonal(lo: u32, hi: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    let mut r = lo.max(1);
    while r <= hi {
        out.push((r, r, r));
        r *= 2;
    }
    out
}

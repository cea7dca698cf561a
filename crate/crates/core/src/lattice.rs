//! Frequency-lattice primitives: brackets, phase functions, truncations.
//!
//! All phase arithmetic is exact integer arithmetic. Enumerations are
//! lexicographic in `(n1, n2)` so seeded sampling does not depend on the
//! truncation that requested it.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Fourier mode `n = (n1, n2)` of the 2D torus.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct FrequencyIndex {
    pub n1: i32,
    pub n2: i32,
}

impl FrequencyIndex {
    pub const ZERO: FrequencyIndex = FrequencyIndex { n1: 0, n2: 0 };

    pub const fn new(n1: i32, n2: i32) -> Self {
        FrequencyIndex { n1, n2 }
    }

    pub fn is_zero(self) -> bool {
        self.n1 == 0 && self.n2 == 0
    }

    /// `|n|^2`, exact.
    pub fn norm_sq(self) -> i64 {
        let (a, b) = (self.n1 as i64, self.n2 as i64);
        a * a + b * b
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn dot(self, other: FrequencyIndex) -> i64 {
        self.n1 as i64 * other.n1 as i64 + self.n2 as i64 * other.n2 as i64
    }

    pub fn scale(self, a: i32) -> Self {
        FrequencyIndex::new(self.n1 * a, self.n2 * a)
    }
}

impl Add for FrequencyIndex {
    type Output = FrequencyIndex;
    fn add(self, rhs: FrequencyIndex) -> FrequencyIndex {
        FrequencyIndex::new(self.n1 + rhs.n1, self.n2 + rhs.n2)
    }
}

impl Sub for FrequencyIndex {
    type Output = FrequencyIndex;
    fn sub(self, rhs: FrequencyIndex) -> FrequencyIndex {
        FrequencyIndex::new(self.n1 - rhs.n1, self.n2 - rhs.n2)
    }
}

impl Neg for FrequencyIndex {
    type Output = FrequencyIndex;
    fn neg(self) -> FrequencyIndex {
        FrequencyIndex::new(-self.n1, -self.n2)
    }
}

impl fmt::Display for FrequencyIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.n1, self.n2)
    }
}

impl FromStr for FrequencyIndex {
    type Err = Error;

    /// Parses `"n1,n2"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let parse = |p: Option<&str>| -> Result<i32> {
            p.ok_or_else(|| Error::InvalidInput(format!("expected `n1,n2`, got `{s}`")))?
                .parse::<i32>()
                .map_err(|e| Error::InvalidInput(format!("bad frequency component in `{s}`: {e}")))
        };
        let n1 = parse(parts.next())?;
        let n2 = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::InvalidInput(format!("expected two components, got `{s}`")));
        }
        Ok(FrequencyIndex::new(n1, n2))
    }
}

/// Japanese bracket `(1 + |n|^2)^{1/2}`.
pub fn bracket(n: FrequencyIndex) -> f64 {
    (1.0 + n.norm_sq() as f64).sqrt()
}

/// The three quadratic nonlinearities `|u|^2`, `u^2` and `conj(u)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    Abs2,
    Square,
    ConjSquare,
}

impl FromStr for Nonlinearity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abs2" => Ok(Nonlinearity::Abs2),
            "square" => Ok(Nonlinearity::Square),
            "conj-square" | "conj_square" | "conjsquare" => Ok(Nonlinearity::ConjSquare),
            other => Err(Error::InvalidInput(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::Abs2 => "abs2",
            Nonlinearity::Square => "square",
            Nonlinearity::ConjSquare => "conj-square",
        })
    }
}

/// Resonance value `m` of a frequency triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseValue(pub i64);

/// Phase function of a quadratic interaction.
///
/// `Abs2` requires `n - n1 + n2 = 0` and returns `|n|^2 - |n1|^2 + |n2|^2`,
/// which then equals `-2 n.n2`. `Square` returns `-2 n1.n2` and `ConjSquare`
/// returns `|n|^2 + |n1|^2 + |n2|^2`.
pub fn phase(
    nonlinearity: Nonlinearity,
    n: FrequencyIndex,
    n1: FrequencyIndex,
    n2: FrequencyIndex,
) -> Result<PhaseValue> {
    match nonlinearity {
        Nonlinearity::Abs2 => {
            if !(n - n1 + n2).is_zero() {
                return Err(Error::ConvolutionConstraint { n, n1, n2 });
            }
            Ok(PhaseValue(n.norm_sq() - n1.norm_sq() + n2.norm_sq()))
        }
        Nonlinearity::Square => Ok(PhaseValue(-2 * n1.dot(n2))),
        Nonlinearity::ConjSquare => Ok(PhaseValue(n.norm_sq() + n1.norm_sq() + n2.norm_sq())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    /// `{n : |n| <= N}`
    Euclidean,
    /// `{n : N/2 < <n> <= N}`
    DyadicShell,
}

fn in_truncation(n: FrequencyIndex, big_n: i64, mode: TruncationMode) -> bool {
    let r2 = n.norm_sq();
    match mode {
        TruncationMode::Euclidean => r2 <= big_n * big_n,
        // N/2 < <n> <= N  <=>  N^2 < 4 (1 + |n|^2)  and  1 + |n|^2 <= N^2
        TruncationMode::DyadicShell => {
            big_n * big_n < 4 * (1 + r2) && 1 + r2 <= big_n * big_n
        }
    }
}

/// Lattice points of a truncation, in lexicographic order.
pub fn truncation_set(big_n: u32, mode: TruncationMode) -> Vec<FrequencyIndex> {
    let r = big_n as i32;
    let mut out = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            let n = FrequencyIndex::new(a, b);
            if in_truncation(n, big_n as i64, mode) {
                out.push(n);
            }
        }
    }
    out
}

/// The Euclidean disc `{|n| <= N}` with a dense position lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Disc {
    truncation: u32,
    points: Vec<FrequencyIndex>,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl Disc {
    pub fn new(truncation: u32) -> Self {
        let points = truncation_set(truncation, TruncationMode::Euclidean);
        let side = 2 * truncation as usize + 1;
        let mut lookup = vec![ABSENT; side * side];
        let r = truncation as i32;
        for (i, p) in points.iter().enumerate() {
            lookup[(p.n1 + r) as usize * side + (p.n2 + r) as usize] = i as u32;
        }
        Disc {
            truncation,
            points,
            lookup,
        }
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn points(&self) -> &[FrequencyIndex] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Position of `n` in the lexicographic enumeration, if `|n| <= N`.
    pub fn position(&self, n: FrequencyIndex) -> Option<usize> {
        let r = self.truncation as i32;
        if n.n1 < -r || n.n1 > r || n.n2 < -r || n.n2 > r {
            return None;
        }
        let side = 2 * self.truncation as usize + 1;
        match self.lookup[(n.n1 + r) as usize * side + (n.n2 + r) as usize] {
            ABSENT => None,
            i => Some(i as usize),
        }
    }

    pub fn contains(&self, n: FrequencyIndex) -> bool {
        self.position(n).is_some()
    }
}

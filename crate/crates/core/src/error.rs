use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::FrequencyIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero mode excluded by renormalization")]
    ZeroMode,

    #[error("convolution constraint n - n1 + n2 = 0 violated by ({n:?}, {n1:?}, {n2:?})")]
    ConvolutionConstraint {
        n: FrequencyIndex,
        n1: FrequencyIndex,
        n2: FrequencyIndex,
    },

    #[error("unsupported dimension d = {0} (expected 1, 2 or 3)")]
    UnsupportedDimension(u32),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input")]
    EmptyInput,

    #[error("{axis} = 0 excluded")]
    ExcludedZero { axis: &'static str },

    #[error("negative or non-real tensor entry at position {index}")]
    NegativeEntry { index: usize },

    #[error("support enumeration needs {candidates} candidate pairs, budget is {budget}")]
    BudgetExceeded { candidates: u64, budget: u64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        estimate: f64,
        last_iterate: Vec<Complex64>,
    },

    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),

    #[error("no contraction at this (alpha, N, T, seed): {iterations} iterations, last ratio {last_ratio:e}, residual {residual:e}")]
    NoContraction {
        iterations: usize,
        last_ratio: f64,
        residual: f64,
    },

    #[error("blow-up guard triggered at t = {time}")]
    BlowUp { time: f64 },

    #[error("malformed record on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the computation itself (as opposed to bad input).
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            Error::NoContraction { .. } | Error::BlowUp { .. } | Error::NonConvergence { .. }
        )
    }
}

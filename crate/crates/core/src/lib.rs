//! Numerics for the quadratic NLS `i u_t + Δu = |u|^2 - mean|u|^2` on the
//! two-dimensional torus with random Gaussian initial data.

pub mod counting;
pub mod error;
pub mod io;
pub mod lattice;
pub mod picard;
pub mod random_field;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod tensors;

pub use error::{Error, Result};
pub use lattice::{bracket, phase, truncation_set, Disc, FrequencyIndex, Nonlinearity, TruncationMode};
pub use random_field::{sample_data, GaussianSeed, SpectralField};

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Parameters shared by all subcommands. Every flag can also come from the
/// `--config` JSON file, whose values win over the command line.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Data regularity, comma list for sweeps.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,

    /// Truncation (or radius) list.
    #[arg(long = "N", global = true, value_delimiter = ',')]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Vec<u32>>,

    /// Evaluation time.
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,

    /// Solver horizon.
    #[arg(long = "T", global = true)]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,

    /// Output frequency as `n1,n2`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    #[arg(long = "output", global = true)]
    #[serde(rename = "output_path", alias = "output", skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// `abs2`, `square` or `conj-square`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<u32>,

    /// Counting cases, comma list of I..IV.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<Vec<String>>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    /// Resonance level of the base tensor.
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,

    /// Sobolev exponent for monitoring or measuring.
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,

    /// Time intervals on `[0, T]`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,

    /// RK4 step for `solve --method rk4`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,

    /// `duhamel` (default) or `rk4`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,

    /// Probability floor for `tightness`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    /// Fields set in `top` replace those of `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top; alpha, truncation, t, horizon, n, seed, samples, output_path, format,
            nonlinearity, dim, case, epsilon, m, s, tol, max_iter, steps, dt, method, threshold)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_win() {
        let flags = RunConfig {
            alpha: Some(vec![0.5]),
            seed: Some(3),
            ..RunConfig::default()
        };
        let file: RunConfig = serde_json::from_str(r#"{"alpha": [0.75, 1.0], "N": [8]}"#).unwrap();
        let merged = flags.overlay(file);
        assert_eq!(merged.alpha, Some(vec![0.75, 1.0]));
        assert_eq!(merged.truncation, Some(vec![8]));
        assert_eq!(merged.seed, Some(3));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"alpah": [0.5]}"#).is_err());
    }
}

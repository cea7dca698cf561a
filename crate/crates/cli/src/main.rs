//! `qnls`: batch runs of the sampling, Picard, counting, tensor and solver
//! experiments with CSV or JSON output.
//!
//! Exit status is 0 on success, 1 on invalid input and 2 when the numerics
//! fail (no contraction, blow-up, non-convergence).

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Failure, Report};
use config::{Format, RunConfig};

/// Default output directory when `--output` is absent; stdout if unset too.
const OUT_DIR_VAR: &str = "QNLS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "qnls", version, about = "Random-data quadratic NLS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    params: RunConfig,

    /// JSON file of parameters; its values override the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for sweep cells (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Random initial data on the disc `|n| <= N`.
    Sample,
    /// Second Picard iterate at one frequency, per seed.
    SecondIterate,
    /// Closed-form second moment over an `alpha x N` grid.
    VarianceScan,
    /// Partial sums along the resonant line.
    ResonantSum,
    /// Brute-force lattice counts against their bounds.
    CountingCheck,
    /// Deterministic tensor norm estimates.
    TensorCheck,
    /// Fixed point of the Duhamel map (or RK4 with `--method rk4`).
    Solve,
    /// Cauchy differences as the truncation doubles.
    Converge,
    /// Critical regularity and divergence verdicts.
    Scaling,
    /// Paley-Zygmund anti-concentration check.
    Tightness,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::SecondIterate => "second-iterate",
            Command::VarianceScan => "variance-scan",
            Command::ResonantSum => "resonant-sum",
            Command::CountingCheck => "counting-check",
            Command::TensorCheck => "tensor-check",
            Command::Solve => "solve",
            Command::Converge => "converge",
            Command::Scaling => "scaling",
            Command::Tightness => "tightness",
        }
    }

    fn run(self, cfg: &RunConfig) -> Result<Report, Failure> {
        match self {
            Command::Sample => commands::sample(cfg),
            Command::SecondIterate => commands::second_iterate(cfg),
            Command::VarianceScan => commands::variance_scan(cfg),
            Command::ResonantSum => commands::resonant_sum(cfg),
            Command::CountingCheck => commands::counting_check(cfg),
            Command::TensorCheck => commands::tensor_check(cfg),
            Command::Solve => commands::solve(cfg),
            Command::Converge => commands::converge(cfg),
            Command::Scaling => commands::scaling(cfg),
            Command::Tightness => commands::tightness(cfg),
        }
    }
}

fn render(command: Command, cfg: &RunConfig, report: Report) -> String {
    let preamble = commands::preamble(command.name(), cfg);
    match cfg.format() {
        Format::Csv => {
            let mut buf = Vec::new();
            let lines: Vec<String> = preamble.into_iter().chain(report.notes).collect();
            qnls_core::io::write_comment_block(&mut buf, &lines).expect("write to memory");
            String::from_utf8(buf).expect("utf-8 output") + &report.csv
        }
        Format::Json => {
            let doc = json!({
                "command": command.name(),
                "version": env!("CARGO_PKG_VERSION"),
                "config": cfg,
                "kernel_constant": qnls_core::picard::kernel_constant(),
                "notes": report.notes,
                "data": report.json,
            });
            serde_json::to_string_pretty(&doc).expect("json output") + "\n"
        }
    }
}

fn destination(command: Command, cfg: &RunConfig) -> Option<PathBuf> {
    if let Some(p) = &cfg.output_path {
        return Some(p.clone());
    }
    let dir = std::env::var_os(OUT_DIR_VAR)?;
    let ext = match cfg.format() {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    Some(PathBuf::from(dir).join(format!("{}.{ext}", command.name())))
}

fn emit(command: Command, cfg: &RunConfig, text: &str) -> std::io::Result<()> {
    match destination(command, cfg) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, text)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => cli.params.overlay(RunConfig::from_file(path).map_err(Failure::Usage)?),
        None => cli.params,
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    let report = cli.command.run(&cfg)?;
    let text = render(cli.command, &cfg, report);
    emit(cli.command, &cfg, &text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("qnls: {e}");
            ExitCode::from(if e.is_computational() { 2 } else { 1 })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("qnls: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("qnls: i/o error: {e}");
            ExitCode::from(1)
        }
    }
}

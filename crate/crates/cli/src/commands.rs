use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use qnls_core::counting::{audit_counting_bound, CountingCase};
use qnls_core::io::fmt_real;
use qnls_core::picard::{
    divergence_verdict, kernel_constant, resonant_line_sum, scaling_critical,
    second_iterate_samples, tightness_test, variance_exact, ScanRecord, Statistic,
    PALEY_ZYGMUND_FLOOR, SCAN_CSV_HEADER,
};
use qnls_core::solver::{
    convergence_study, solve_u_truncated, solve_v_from_data, StudyOptions,
    SolveOptions, TrajectoryField, STUDY_CSV_HEADER, TRAJECTORY_CSV_HEADER,
};
use qnls_core::stats::mean_estimate;
use qnls_core::tensors::{scan_deterministic_estimates, ESTIMATE_CSV_HEADER};
use qnls_core::{sample_data, FrequencyIndex, GaussianSeed, Nonlinearity};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(qnls_core::Error),
    Io(std::io::Error),
}

impl From<qnls_core::Error> for Failure {
    fn from(e: qnls_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<Report, Failure>;

/// What a subcommand produced, before rendering.
pub struct Report {
    /// Extra `#` lines after the config echo.
    pub notes: Vec<String>,
    /// CSV header and rows.
    pub csv: String,
    pub json: Value,
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn alphas(cfg: &RunConfig) -> Result<Vec<f64>, Failure> {
    match &cfg.alpha {
        Some(v) if !v.is_empty() => {
            if v.iter().any(|a| !a.is_finite()) {
                return usage("--alpha values must be finite");
            }
            Ok(v.clone())
        }
        _ => usage("--alpha is required"),
    }
}

fn single_alpha(cfg: &RunConfig) -> Result<f64, Failure> {
    match alphas(cfg)?.as_slice() {
        [a] => Ok(*a),
        _ => usage("this subcommand takes a single --alpha"),
    }
}

fn truncations(cfg: &RunConfig, default: Option<&[u32]>) -> Result<Vec<u32>, Failure> {
    let list = match (&cfg.truncation, default) {
        (Some(v), _) if !v.is_empty() => v.clone(),
        (None, Some(d)) => d.to_vec(),
        _ => return usage("--N is required"),
    };
    if list.contains(&0) {
        return usage("--N values must be positive");
    }
    Ok(list)
}

fn single_truncation(cfg: &RunConfig) -> Result<u32, Failure> {
    match truncations(cfg, None)?.as_slice() {
        [n] => Ok(*n),
        _ => usage("this subcommand takes a single --N"),
    }
}

fn time(cfg: &RunConfig) -> Result<f64, Failure> {
    let t = cfg.t.unwrap_or(1.0);
    if !t.is_finite() {
        return usage("--t must be finite");
    }
    Ok(t)
}

fn horizon(cfg: &RunConfig) -> Result<f64, Failure> {
    match cfg.horizon {
        Some(h) if h > 0.0 && h.is_finite() => Ok(h),
        Some(h) => usage(format!("--T must be positive, got {h}")),
        None => usage("--T is required"),
    }
}

fn mode(cfg: &RunConfig) -> Result<FrequencyIndex, Failure> {
    let n: FrequencyIndex = match &cfg.n {
        Some(s) => s.parse().map_err(|e: qnls_core::Error| Failure::Usage(e.to_string()))?,
        None => FrequencyIndex::new(1, 0),
    };
    if n.is_zero() {
        return usage("--n must be a nonzero frequency");
    }
    Ok(n)
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn positive(name: &str, v: Option<f64>, default: f64) -> Result<f64, Failure> {
    let v = v.unwrap_or(default);
    if !(v > 0.0 && v.is_finite()) {
        return usage(format!("--{name} must be positive, got {v}"));
    }
    Ok(v)
}

fn solve_options(cfg: &RunConfig) -> Result<SolveOptions, Failure> {
    let d = SolveOptions::default();
    let opts = SolveOptions {
        steps: cfg.steps.unwrap_or(d.steps),
        s_monitor: cfg.s.unwrap_or(d.s_monitor),
        tol: positive("tol", cfg.tol, d.tol)?,
        max_iter: cfg.max_iter.unwrap_or(d.max_iter),
        ..d
    };
    if opts.steps == 0 || opts.max_iter == 0 {
        return usage("--steps and --max-iter must be positive");
    }
    Ok(opts)
}

fn csv_of(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

pub fn sample(cfg: &RunConfig) -> Outcome {
    let alpha = single_alpha(cfg)?;
    let n = single_truncation(cfg)?;
    let field = sample_data(GaussianSeed::new(seed(cfg)), alpha, n);
    let mut csv = Vec::new();
    field.write_csv(&mut csv)?;
    let rows: Vec<Value> = field
        .iter()
        .map(|(k, z)| json!({"n1": k.n1, "n2": k.n2, "re": z.re, "im": z.im}))
        .collect();
    Ok(Report {
        notes: vec![],
        csv: String::from_utf8(csv).expect("utf-8 output"),
        json: Value::Array(rows),
    })
}

pub const SECOND_ITERATE_CSV_HEADER: &str = "sample,seed,re,im";

pub fn second_iterate(cfg: &RunConfig) -> Outcome {
    let alpha = single_alpha(cfg)?;
    let big_n = single_truncation(cfg)?;
    let (t, n, base) = (time(cfg)?, mode(cfg)?, seed(cfg));
    let samples = cfg.samples.unwrap_or(1);
    if samples == 0 {
        return usage("--samples must be positive");
    }
    let draws = second_iterate_samples(alpha, big_n, t, n, GaussianSeed::new(base), samples)?;
    let rows = draws.iter().enumerate().map(|(i, z)| {
        format!("{i},{},{},{}", base.wrapping_add(i as u64), fmt_real(z.re), fmt_real(z.im))
    });
    let json_rows: Vec<Value> = draws
        .iter()
        .enumerate()
        .map(|(i, z)| json!({"sample": i, "seed": base.wrapping_add(i as u64), "re": z.re, "im": z.im}))
        .collect();
    Ok(Report {
        notes: vec![],
        csv: csv_of(SECOND_ITERATE_CSV_HEADER, rows),
        json: Value::Array(json_rows),
    })
}

/// Grid `alpha x N`, one cell per pair, failures kept as NaN rows.
fn sweep<F>(cfg: &RunConfig, cell: F) -> Outcome
where
    F: Fn(f64, u32) -> Result<Vec<ScanRecord>, (Vec<ScanRecord>, String)> + Sync,
{
    let ns = truncations(cfg, None)?;
    let grid: Vec<(f64, u32)> = alphas(cfg)?
        .into_iter()
        .flat_map(|a| ns.iter().map(move |&n| (a, n)))
        .collect();
    let results: Vec<_> = grid.par_iter().map(|&(a, n)| cell(a, n)).collect();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(rows) => records.extend(rows),
            Err((rows, msg)) => {
                records.extend(rows);
                failed.push(msg);
            }
        }
    }
    records.sort_by_key(ScanRecord::sweep_key);
    failed.sort();
    Ok(Report {
        notes: failed.into_iter().map(|m| format!("failed cell: {m}")).collect(),
        csv: csv_of(SCAN_CSV_HEADER, records.iter().map(ScanRecord::csv_row)),
        json: to_json(&records),
    })
}

fn record(alpha: f64, n_trunc: u32, t: f64, n: FrequencyIndex, stat: Statistic, value: f64, samples: u64, seed: u64) -> ScanRecord {
    ScanRecord {
        alpha,
        truncation: n_trunc,
        t,
        n,
        statistic: stat,
        value,
        samples,
        seed,
    }
}

pub fn variance_scan(cfg: &RunConfig) -> Outcome {
    let (t, n, base) = (time(cfg)?, mode(cfg)?, seed(cfg));
    let samples = cfg.samples.unwrap_or(0);
    sweep(cfg, |alpha, big_n| {
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        let exact = variance_exact(alpha, big_n, t, n).unwrap_or_else(|e| {
            errors.push(e.to_string());
            f64::NAN
        });
        rows.push(record(alpha, big_n, t, n, Statistic::ExactVariance, exact, 0, 0));
        if samples > 0 {
            let mc = second_iterate_samples(alpha, big_n, t, n, GaussianSeed::new(base), samples)
                .map(|d| mean_estimate(&d.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()).mean)
                .unwrap_or_else(|e| {
                    errors.push(e.to_string());
                    f64::NAN
                });
            rows.push(record(alpha, big_n, t, n, Statistic::McMean, mc, samples as u64, base));
        }
        if errors.is_empty() {
            Ok(rows)
        } else {
            Err((rows, format!("alpha={alpha} N={big_n}: {}", errors.join("; "))))
        }
    })
}

pub fn resonant_sum(cfg: &RunConfig) -> Outcome {
    let (t, n) = (time(cfg)?, mode(cfg)?);
    sweep(cfg, |alpha, big_n| {
        match resonant_line_sum(alpha, big_n, t, n) {
            Ok(v) => Ok(vec![record(alpha, big_n, t, n, Statistic::ResonantSum, v, 0, 0)]),
            Err(e) => Err((
                vec![record(alpha, big_n, t, n, Statistic::ResonantSum, f64::NAN, 0, 0)],
                format!("alpha={alpha} N={big_n}: {e}"),
            )),
        }
    })
}

pub fn tightness(cfg: &RunConfig) -> Outcome {
    let alpha = single_alpha(cfg)?;
    let big_n = single_truncation(cfg)?;
    let (t, n, base) = (time(cfg)?, mode(cfg)?, seed(cfg));
    let samples = cfg.samples.unwrap_or(10_000);
    if samples == 0 {
        return usage("--samples must be positive");
    }
    let threshold = positive("threshold", cfg.threshold, PALEY_ZYGMUND_FLOOR)?;
    let draws = second_iterate_samples(alpha, big_n, t, n, GaussianSeed::new(base), samples)?;
    let report = tightness_test(&draws, threshold)?;
    let row = record(
        alpha,
        big_n,
        t,
        n,
        Statistic::PzFraction,
        report.empirical_fraction,
        samples as u64,
        base,
    );
    Ok(Report {
        notes: vec![
            format!("pz_lower_bound {}", fmt_real(report.pz_lower_bound)),
            format!("mean_square {}", fmt_real(report.mean_square)),
            format!("moment_bound {}", fmt_real(report.moment_bound)),
            format!("pass {}", report.pass),
        ],
        csv: csv_of(SCAN_CSV_HEADER, [row.csv_row()]),
        json: json!({"record": to_json(&row), "report": to_json(&report)}),
    })
}

pub fn counting_check(cfg: &RunConfig) -> Outcome {
    let cases: Vec<CountingCase> = match &cfg.case {
        Some(list) => list
            .iter()
            .map(|c| c.parse().map_err(|e: qnls_core::Error| Failure::Usage(e.to_string())))
            .collect::<Result<_, _>>()?,
        None => CountingCase::ALL.to_vec(),
    };
    let mut cases = cases;
    cases.sort();
    cases.dedup();
    let epsilon = positive("epsilon", cfg.epsilon, 0.1)?;
    let mut radii = truncations(cfg, Some(&[2, 4, 8, 16, 32]))?;
    radii.sort_unstable();
    radii.dedup();
    let scales: Vec<(u32, u32, u32)> = radii.iter().map(|&r| (r, r, r)).collect();
    let mut notes = Vec::new();
    let mut reports = Vec::new();
    let mut first_error = None;
    for case in cases {
        match audit_counting_bound(case, epsilon, &scales) {
            Ok(r) => {
                notes.push(format!(
                    "case {case}: max_ratio {} log_ratio_slope {}",
                    fmt_real(r.max_ratio),
                    fmt_real(r.log_ratio_slope)
                ));
                reports.push(r);
            }
            Err(e) => {
                notes.push(format!("case {case} failed: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }
    if reports.is_empty() {
        return Err(first_error.expect("at least one case ran").into());
    }
    let rows = reports.iter().flat_map(|r| r.table.iter().map(|row| row.csv_row()));
    Ok(Report {
        notes,
        csv: csv_of(qnls_core::counting::AUDIT_CSV_HEADER, rows),
        json: to_json(&reports),
    })
}

pub fn tensor_check(cfg: &RunConfig) -> Outcome {
    let epsilon = positive("epsilon", cfg.epsilon, 0.1)?;
    let m = cfg.m.unwrap_or(0);
    let mut radii = truncations(cfg, Some(&[4, 8, 16, 32]))?;
    radii.sort_unstable();
    radii.dedup();
    let scales: Vec<(u32, u32, u32)> = radii.iter().map(|&r| (r, r, r)).collect();
    let mut scan = scan_deterministic_estimates(&scales, m, epsilon)?;
    scan.rows.sort_by_key(|r| (r.estimate, r.n, r.n1, r.n2));
    let notes = scan
        .trends
        .iter()
        .map(|tr| {
            format!(
                "estimate {}: drift {} slope {} norm_slope {}",
                tr.estimate,
                fmt_real(tr.drift),
                fmt_real(tr.slope),
                fmt_real(tr.norm_slope)
            )
        })
        .collect();
    Ok(Report {
        notes,
        csv: csv_of(ESTIMATE_CSV_HEADER, scan.rows.iter().map(|r| r.csv_row())),
        json: to_json(&scan),
    })
}

fn trajectory_json(traj: &TrajectoryField) -> Value {
    let rows: Vec<Value> = traj
        .fields()
        .iter()
        .enumerate()
        .flat_map(|(j, f)| {
            let t = traj.time(j);
            f.iter()
                .map(move |(k, z)| json!({"t": t, "n1": k.n1, "n2": k.n2, "re": z.re, "im": z.im}))
        })
        .collect();
    Value::Array(rows)
}

fn trajectory_csv(traj: &TrajectoryField) -> Result<String, Failure> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    let text = String::from_utf8(buf).expect("utf-8 output");
    debug_assert!(text.starts_with(TRAJECTORY_CSV_HEADER));
    Ok(text)
}

pub fn solve(cfg: &RunConfig) -> Outcome {
    let alpha = single_alpha(cfg)?;
    let big_n = single_truncation(cfg)?;
    let horizon = horizon(cfg)?;
    let base = GaussianSeed::new(seed(cfg));
    match cfg.method.as_deref().unwrap_or("duhamel") {
        "duhamel" => {
            let opts = solve_options(cfg)?;
            let data = sample_data(base, alpha, big_n);
            let (v, diag) = solve_v_from_data(&data, horizon, &opts)?;
            let u = TrajectoryField::linear(&data, v.dt(), opts.steps).add(&v)?;
            let ratios: Vec<String> = diag.contraction_ratios.iter().map(|&r| fmt_real(r)).collect();
            Ok(Report {
                notes: vec![
                    format!("iteration_count {}", diag.iteration_count),
                    format!("contraction_ratios {}", ratios.join(" ")),
                    format!("final_residual {}", fmt_real(diag.final_residual)),
                ],
                csv: trajectory_csv(&u)?,
                json: json!({"diagnostics": to_json(&diag), "trajectory": trajectory_json(&u)}),
            })
        }
        "rk4" => {
            let dt = positive("dt", cfg.dt, horizon / 64.0)?;
            let u = solve_u_truncated(alpha, big_n, base, horizon, dt)?;
            Ok(Report {
                notes: vec![format!("steps {}", u.steps())],
                csv: trajectory_csv(&u)?,
                json: json!({"trajectory": trajectory_json(&u)}),
            })
        }
        other => usage(format!("unknown --method `{other}`, expected duhamel or rk4")),
    }
}

pub fn converge(cfg: &RunConfig) -> Outcome {
    let alpha = single_alpha(cfg)?;
    let mut list = truncations(cfg, None)?;
    list.sort_unstable();
    let horizon = horizon(cfg)?;
    // --s is the measurement exponent here; the solves keep their own monitor
    let mut solve = solve_options(cfg)?;
    solve.s_monitor = SolveOptions::default().s_monitor;
    let opts = StudyOptions {
        solve,
        s_measure: cfg.s,
    };
    let table = convergence_study(alpha, GaussianSeed::new(seed(cfg)), &list, horizon, &opts)?;
    let dec: Vec<String> = table
        .log2_decrements
        .iter()
        .map(|d| d.map(fmt_real).unwrap_or_else(|| "NA".into()))
        .collect();
    Ok(Report {
        notes: vec![
            format!("log2_decrements {}", dec.join(" ")),
            format!("strictly_decreasing {}", table.strictly_decreasing()),
        ],
        csv: csv_of(STUDY_CSV_HEADER, table.rows.iter().map(|r| r.csv_row())),
        json: to_json(&table),
    })
}

pub const VERDICT_CSV_HEADER: &str = "alpha,dim,nonlinearity,critical,threshold,verdict";

/// Critical regularity alone, or a verdict table when `--alpha` is given.
pub fn scaling(cfg: &RunConfig) -> Outcome {
    let nl: Nonlinearity = cfg
        .nonlinearity
        .as_deref()
        .unwrap_or("abs2")
        .parse()
        .map_err(|e: qnls_core::Error| Failure::Usage(e.to_string()))?;
    let dim = cfg.dim.unwrap_or(2);
    if !(1..=3).contains(&dim) {
        return usage(format!("--dim must be 1, 2 or 3, got {dim}"));
    }
    let critical = scaling_critical(nl, dim);
    let Some(list) = &cfg.alpha else {
        return Ok(Report {
            notes: vec![],
            csv: format!("{critical}\n"),
            json: json!({"nonlinearity": nl, "dim": dim, "critical": critical}),
        });
    };
    let mut list = list.clone();
    list.sort_by(f64::total_cmp);
    let mut csv = format!("{VERDICT_CSV_HEADER}\n");
    let mut rows = Vec::new();
    for alpha in list {
        let v = divergence_verdict(alpha, dim, nl)?;
        writeln!(
            csv,
            "{},{dim},{nl},{critical},{},{}",
            fmt_real(alpha),
            fmt_real(v.threshold_used),
            v.verdict
        )
        .expect("write to string");
        rows.push(json!({"alpha": alpha, "verdict": to_json(&v)}));
    }
    Ok(Report {
        notes: vec![],
        csv,
        json: json!({"nonlinearity": nl, "dim": dim, "critical": critical, "verdicts": rows}),
    })
}

/// Shared preamble of every output: the config echo and `c`.
pub fn preamble(command: &str, cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("qnls {} {command}", env!("CARGO_PKG_VERSION")),
        format!("config {}", serde_json::to_string(cfg).expect("config serializes")),
        format!("kernel_constant {}", kernel_constant()),
    ]
}

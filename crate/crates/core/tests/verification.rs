//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Every criterion also returns its data rows; criterion 10 recomputes all
//! of them and compares bytes.

mod common;

use std::time::{Duration, Instant};

use qnls_core::counting::{audit_counting_bound, dyadic_diagonal, CountingCase};
use qnls_core::io::fmt_real;
use qnls_core::picard::{
    divergence_verdict, kernel_constant, resonant_line_sum, scaling_critical,
    second_iterate_coeff, second_iterate_samples, tightness_test, variance_exact, Verdict,
    PALEY_ZYGMUND_FLOOR,
};
use qnls_core::random_field::{sample_data, sample_gaussian};
use qnls_core::solver::{
    convergence_study, integrate_truncated, solve_v_from_data, SolveOptions, StudyOptions,
    TrajectoryField,
};
use qnls_core::stats::mean_estimate;
use qnls_core::tensors::{
    build_base_tensor, operator_norm, scan_deterministic_estimates, Partition, SupportSpec,
    NORM_TOLERANCE,
};
use qnls_core::{FrequencyIndex, GaussianSeed, Nonlinearity};

const E1: FrequencyIndex = FrequencyIndex::new(1, 0);

struct Outcome {
    pass: bool,
    detail: String,
    rows: Vec<String>,
}

fn relative_spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}

fn criterion_1() -> Outcome {
    let sums: Vec<f64> = [256, 512, 1024, 2048]
        .iter()
        .map(|&n| resonant_line_sum(0.75, n, 1.0, E1).unwrap())
        .collect();
    let inc: Vec<f64> = sums.windows(2).map(|w| w[1] - w[0]).collect();
    let spread = relative_spread(&inc);
    Outcome {
        pass: inc.iter().all(|&d| d > 0.0) && spread <= 0.10,
        detail: format!("increments {:?}, spread {:.4}", inc, spread),
        rows: sums.iter().map(|&s| fmt_real(s)).collect(),
    }
}

fn criterion_2() -> Outcome {
    let e512 = variance_exact(0.5, 512, 1.0, E1).unwrap();
    let e1024 = variance_exact(0.5, 1024, 1.0, E1).unwrap();
    let rel = (e1024 - e512).abs() / e512;
    Outcome {
        pass: rel < 0.02,
        detail: format!("E(512) {e512:.6}, E(1024) {e1024:.6}, relative change {rel:.5}"),
        rows: vec![fmt_real(e512), fmt_real(e1024)],
    }
}

fn criterion_3() -> Outcome {
    let c = kernel_constant();
    let exact = variance_exact(0.75, 16, 1.0, E1).unwrap();
    let draws = second_iterate_samples(0.75, 16, 1.0, E1, GaussianSeed::new(0xACCE_97A1_0003), 10_000).unwrap();
    let est = mean_estimate(&draws.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let z = (est.mean - exact) / est.std_error;
    Outcome {
        pass: z.abs() <= 3.0,
        detail: format!("c = {c}, exact {exact:.6}, mean {:.6} +- {:.6} ({z:+.2} SE)", est.mean, est.std_error),
        rows: vec![fmt_real(exact), fmt_real(est.mean), fmt_real(est.std_error)],
    }
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    // same comparison with twice the nodes, to expose the quadrature's own error
    let mut worst_fine: f64 = 0.0;
    let mut rows = Vec::new();
    for seed in [11, 12, 13] {
        let s = GaussianSeed::new(seed);
        let data = sample_data(s, 0.75, 8);
        let closed = second_iterate_coeff(0.75, 8, 1.0, E1, s).unwrap();
        let rel = |nodes| (closed - common::trapezoid_second_iterate(&data, 1.0, E1, nodes)).norm() / closed.norm();
        worst = worst.max(rel(1 << 14));
        worst_fine = worst_fine.max(rel(1 << 15));
        rows.push(format!("{},{}", fmt_real(closed.re), fmt_real(closed.im)));
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("worst relative error {worst:.3e} with 2^14 nodes, {worst_fine:.3e} with 2^15"),
        rows,
    }
}

fn criterion_5() -> Outcome {
    let draws = second_iterate_samples(0.75, 32, 1.0, E1, GaussianSeed::new(0xACCE_97A1_0005), 10_000).unwrap();
    let r = tightness_test(&draws, PALEY_ZYGMUND_FLOOR).unwrap();
    Outcome {
        pass: r.pass && r.empirical_fraction >= 1.0 / 1296.0,
        detail: format!(
            "fraction {:.4}, floor {:.6}, moment bound {:.4}",
            r.empirical_fraction, r.pz_lower_bound, r.moment_bound
        ),
        rows: vec![fmt_real(r.empirical_fraction), fmt_real(r.mean_square)],
    }
}

fn criterion_6() -> Outcome {
    let scales = dyadic_diagonal(2, 32);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rows = Vec::new();
    for case in CountingCase::ALL {
        let r = audit_counting_bound(case, 0.1, &scales).unwrap();
        let ok = r.table.iter().all(|row| row.ratio <= r.max_ratio) && r.log_ratio_slope <= 0.05;
        pass &= ok;
        parts.push(format!(
            "{case}: slope {:+.3} max ratio {:.3}{}",
            r.log_ratio_slope,
            r.max_ratio,
            if ok { "" } else { " (fails)" }
        ));
        rows.extend(r.table.iter().map(|row| row.csv_row()));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        rows,
    }
}

/// Small supports with seeded complex values, for the dense oracle.
fn oracle_tensors() -> Vec<qnls_core::tensors::SparseTensor3> {
    let mut out = Vec::new();
    for (m, radii) in [(0, (2, 2, 2)), (0, (3, 3, 3)), (2, (3, 3, 2)), (-4, (4, 3, 2)), (4, (4, 4, 4)), (0, (5, 2, 3))] {
        let t = build_base_tensor(m, &SupportSpec::balls(radii)).unwrap();
        if t.is_empty() || t.nnz() > 500 {
            continue;
        }
        let seed = GaussianSeed::new(0x0AC1E_u64.wrapping_add(m as u64));
        out.push(t.map_values(|e| sample_gaussian(seed, e.n) * sample_gaussian(seed.offset(1), e.n2)));
        out.push(t);
    }
    out
}

fn criterion_7() -> Outcome {
    let scan = scan_deterministic_estimates(&dyadic_diagonal(4, 32), 0, 0.1).unwrap();
    let drift_ok = scan.trends.iter().all(|tr| tr.drift <= 0.10);
    let schur_ok = scan.rows.iter().all(|r| r.lhs <= r.schur + 1e-10);
    let mut svd_gap: f64 = 0.0;
    let mut instances = 0;
    for t in oracle_tensors() {
        for p in Partition::all() {
            let fast = operator_norm(&t, &p, NORM_TOLERANCE).unwrap();
            let dense = common::dense_operator_norm(&t, &p);
            svd_gap = svd_gap.max((fast - dense).abs() / dense.max(1.0));
            instances += 1;
        }
    }
    let svd_ok = svd_gap <= 1e-8;
    let drifts: Vec<String> = scan
        .trends
        .iter()
        .map(|tr| format!("{} {:.3}", tr.estimate, tr.drift))
        .collect();
    Outcome {
        pass: drift_ok && schur_ok && svd_ok,
        detail: format!(
            "drift [{}]; schur {}; svd gap {svd_gap:.2e} over {instances} instances",
            drifts.join(", "),
            if schur_ok { "ok" } else { "violated" }
        ),
        rows: scan.rows.iter().map(|r| r.csv_row()).collect(),
    }
}

fn criterion_8() -> Outcome {
    let (alpha, big_n, horizon) = (0.25, 16, 0.01);
    let s = -alpha - 0.1;
    let opts = SolveOptions::default();
    let seeds: Vec<u64> = (1..=5).collect();
    let mut contraction_ok = true;
    let mut consistency_ok = true;
    let mut monotone = 0;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &seed in &seeds {
        let data = sample_data(GaussianSeed::new(seed), alpha, big_n);
        let expansion = |steps: usize| -> Option<(TrajectoryField, Vec<f64>)> {
            let o = SolveOptions { steps, ..opts };
            let (v, diag) = solve_v_from_data(&data, horizon, &o).ok()?;
            Some((TrajectoryField::linear(&data, v.dt(), steps).add(&v).ok()?, diag.contraction_ratios))
        };
        let (Some((coarse, ratios)), Some((fine, _))) = (expansion(opts.steps), expansion(2 * opts.steps)) else {
            contraction_ok = false;
            continue;
        };
        contraction_ok &= ratios.iter().all(|&r| r < 1.0);
        // C dt^2 from the Richardson difference of the trapezoid runs
        let c_dt2 = coarse.sup_distance(&fine.every(2).unwrap(), s).unwrap() * 4.0 / 3.0;
        let u = integrate_truncated(&data, horizon, opts.steps, true, opts.pad_factor).unwrap();
        let d = coarse.sup_distance(&u, s).unwrap();
        let allowed = 10.0 * opts.tol.max(c_dt2);
        consistency_ok &= d <= allowed;
        worst = worst.max(d / allowed);
        let study = convergence_study(alpha, GaussianSeed::new(seed), &[8, 16, 32, 64], horizon, &StudyOptions::default()).unwrap();
        if study.strictly_decreasing() {
            monotone += 1;
        }
        rows.extend(study.rows.iter().map(|r| r.csv_row()));
        rows.push(fmt_real(d));
    }
    Outcome {
        pass: contraction_ok && consistency_ok && monotone >= 4,
        detail: format!(
            "contraction {}, cross-method worst d/allowed {worst:.3}, monotone d(N) in {monotone}/{} seeds",
            if contraction_ok { "ok" } else { "failed" },
            seeds.len()
        ),
        rows,
    }
}

fn criterion_9() -> Outcome {
    let mut pass = scaling_critical(Nonlinearity::Abs2, 2) == 1.0;
    for nl in [Nonlinearity::Abs2, Nonlinearity::Square, Nonlinearity::ConjSquare] {
        for d in 1..=3u32 {
            pass &= scaling_critical(nl, d) == 2.0 - d as f64 / 2.0;
            let threshold = match nl {
                Nonlinearity::Abs2 => 1.25 - d as f64 / 4.0,
                _ => 2.0 - d as f64 / 4.0,
            };
            for k in -8..=8 {
                let alpha = threshold + k as f64 / 16.0;
                let v = divergence_verdict(alpha, d, nl).unwrap();
                let expected = if alpha >= threshold {
                    Verdict::Diverges
                } else if nl == Nonlinearity::Abs2 && d == 2 {
                    Verdict::Converges
                } else {
                    Verdict::Unknown
                };
                pass &= v.verdict == expected && v.threshold_used == threshold;
            }
        }
    }
    pass &= divergence_verdict(0.5, 4, Nonlinearity::Abs2).is_err();
    Outcome {
        pass,
        detail: "critical 2 - d/2, thresholds 5/4 - d/4 and 2 - d/4".into(),
        rows: vec![],
    }
}

type Criterion = fn() -> Outcome;

fn timed(f: Criterion) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn report(label: &str, pass: bool, detail: &str, took: Duration) {
    println!(
        "criterion {label}: {} ({detail}) [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
    ];
    let mut all = true;
    let mut first_rows = Vec::new();
    for (label, f) in criteria {
        let (out, took) = timed(f);
        report(label, out.pass, &out.detail, took);
        all &= out.pass;
        first_rows.push((label, f, out.rows));
    }
    let start = Instant::now();
    let mut differing = Vec::new();
    for (label, f, rows) in &first_rows {
        if f().rows != *rows {
            differing.push(*label);
        }
    }
    let ok = differing.is_empty();
    let rerun: Vec<&str> = first_rows.iter().map(|r| r.0).collect();
    report(
        "10",
        ok,
        &if ok {
            format!("criteria {} rerun with identical rows", rerun.join(","))
        } else {
            format!("rows differ for criteria {}", differing.join(","))
        },
        start.elapsed(),
    );
    all &= ok;
    std::process::exit(if all { 0 } else { 1 });
}

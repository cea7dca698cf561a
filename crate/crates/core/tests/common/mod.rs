//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use qnls_core::random_field::{linear_flow, SpectralField};
use qnls_core::tensors::{Axis, Partition, SparseTensor3, TensorEntry};
use qnls_core::FrequencyIndex;

/// `P_N(|z|^2)(n)` at time `t` by direct convolution.
fn square_at(data: &SpectralField, t: f64, n: FrequencyIndex) -> Complex64 {
    let z = linear_flow(data, t);
    z.iter()
        .filter_map(|(k, a)| z.get(n + k).map(|b| b * a.conj()))
        .sum()
}

/// Composite trapezoid of `int_0^t e^{-i(t-s)|n|^2} P_N(|z|^2)(s, n) ds`.
pub fn trapezoid_second_iterate(data: &SpectralField, t: f64, n: FrequencyIndex, nodes: usize) -> Complex64 {
    let h = t / nodes as f64;
    let w = n.norm_sq() as f64;
    let f = |s: f64| Complex64::from_polar(1.0, -(t - s) * w) * square_at(data, s, n);
    let mut acc = 0.5 * (f(0.0) + f(t));
    for j in 1..nodes {
        acc += f(j as f64 * h);
    }
    acc * h
}

fn coord(e: &TensorEntry, a: Axis) -> FrequencyIndex {
    match a {
        Axis::N => e.n,
        Axis::N1 => e.n1,
        Axis::N2 => e.n2,
    }
}

/// Largest singular value of the dense unfolding.
pub fn dense_operator_norm(t: &SparseTensor3, p: &Partition) -> f64 {
    let (ins, outs) = (p.input_axes(), p.output_axes());
    let key = |e: &TensorEntry, axes: &[Axis]| axes.iter().map(|&a| coord(e, a)).collect::<Vec<_>>();
    let mut rows: HashMap<Vec<FrequencyIndex>, usize> = HashMap::new();
    let mut cols: HashMap<Vec<FrequencyIndex>, usize> = HashMap::new();
    for e in t.entries() {
        let nr = rows.len();
        rows.entry(key(e, &outs)).or_insert(nr);
        let nc = cols.len();
        cols.entry(key(e, &ins)).or_insert(nc);
    }
    let mut a = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
    for e in t.entries() {
        a[(rows[&key(e, &outs)], cols[&key(e, &ins)])] += e.value;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

#![allow(dead_code)]

use refcurve::analysis::simulate_lms;
use refcurve::{BccgParams, Dataset};

/// Adaptive Simpson on `[a, b]`, first split into `pieces` panels so narrow
/// peaks cannot slip between the initial nodes.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            simpson(f, lo, hi, flo, fmid, fhi, whole, tol / pieces as f64, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn linear_truth(x: f64) -> BccgParams {
    BccgParams::new(40.0 + 0.2 * x, 0.12, 0.0).unwrap()
}

pub fn linear_data(n: usize, seed: u64) -> Dataset {
    simulate_lms(linear_truth, n, (0.0, 100.0), seed).unwrap()
}

/// Deviance trace never increases.
pub fn assert_monotone_trace(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "deviance rose from {} to {}", w[0], w[1]);
    }
}

//! Browser bindings for the demo page:
//!
//! - [`density`]: BCCG density explorer
//! - [`simulate_and_fit`]: fitted versus true percentile curves on simulated data
//! - [`percentile_to_z`] / [`z_to_percentile`]: converter
//!
//! Each view has a plain Rust function (usable and testable natively) and a
//! `#[wasm_bindgen]` wrapper that returns JSON text to JavaScript.

use std::f64::consts::PI;

use refcurve::analysis::simulate_lms;
use refcurve::bccg::{self, TailMode};
use refcurve::fitting::linspace;
use refcurve::{fit_lms, percentile_curves, BccgParams, FitOptions, Hyperparameters, DEFAULT_PERCENTILES};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Serialize)]
pub struct DensityTable {
    pub y: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
    pub levels: Vec<f64>,
    /// Quantiles at `levels` (exact tails).
    pub quantiles: Vec<f64>,
    /// Probability mass the untruncated normal assigns to admissible z.
    pub truncation_mass: f64,
}

/// Density and distribution function of BCCG(m, s, l) on `points` values
/// spanning its 0.05%–99.95% quantiles.
pub fn density_table(m: f64, s: f64, l: f64, points: usize) -> Result<DensityTable, String> {
    let p = BccgParams::new(m, s, l).map_err(|e| e.to_string())?;
    if !(2..=5000).contains(&points) {
        return Err(format!("points must lie in [2, 5000], got {points}"));
    }
    let lo = bccg::quantile(0.0005, &p, TailMode::Exact).map_err(|e| e.to_string())?;
    let hi = bccg::quantile(0.9995, &p, TailMode::Exact).map_err(|e| e.to_string())?;
    let y = linspace(lo, hi, points);
    let pdf = y.iter().map(|&v| bccg::log_density(v, &p).map_or(0.0, f64::exp)).collect();
    let cdf = y.iter().map(|&v| bccg::cdf(v, &p, TailMode::Exact).unwrap_or(f64::NAN)).collect();
    let levels = DEFAULT_PERCENTILES.to_vec();
    let quantiles = levels
        .iter()
        .map(|&lv| bccg::quantile(lv / 100.0, &p, TailMode::Exact).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    Ok(DensityTable { y, pdf, cdf, levels, quantiles, truncation_mass: p.truncation_mass() })
}

/// Ground-truth parameter curves offered by the demo, on x ∈ [0, 100].
pub fn truth(shape: &str) -> Result<fn(f64) -> BccgParams, String> {
    let f: fn(f64) -> BccgParams = match shape {
        "linear" => |x| BccgParams::new(40.0 + 0.2 * x, 0.1, 0.0).expect("valid"),
        "sine" => |x| BccgParams::new(40.0 + 0.1 * x + 10.0 * (PI * x / 100.0).sin(), 0.1, 0.5).expect("valid"),
        "skewed" => |x| BccgParams::new(20.0 + 0.5 * x, 0.2 - 0.001 * x, -1.0 + 0.02 * x).expect("valid"),
        other => return Err(format!("unknown shape {other:?}; use linear, sine or skewed")),
    };
    Ok(f)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulatedFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: Vec<f64>,
    pub levels: Vec<f64>,
    /// `fitted[i][j]`: fitted percentile `levels[i]` at `grid[j]`.
    pub fitted: Vec<Vec<Option<f64>>>,
    pub truth: Vec<Vec<f64>>,
    pub global_deviance: f64,
    pub edf: [f64; 3],
    pub converged: bool,
    pub iterations: usize,
}

/// Draws `n` points from a ground-truth shape, fits an LMS model with the
/// given dfs and returns fitted and true percentile curves.
pub fn simulate_fit(shape: &str, n: usize, seed: u64, m_df: f64, s_df: f64, l_df: f64) -> Result<SimulatedFit, String> {
    if !(20..=20_000).contains(&n) {
        return Err(format!("n must lie in [20, 20000], got {n}"));
    }
    let f = truth(shape)?;
    let data = simulate_lms(f, n, (0.0, 100.0), seed).map_err(|e| e.to_string())?;
    let (model, _) =
        fit_lms(&data, &Hyperparameters::lms(m_df, s_df, l_df), &FitOptions::default()).map_err(|e| e.to_string())?;
    let grid = linspace(0.0, 100.0, 101);
    let levels = DEFAULT_PERCENTILES.to_vec();
    let fitted = percentile_curves(&model, &grid, &levels).map_err(|e| e.to_string())?.values;
    let truth = levels
        .iter()
        .map(|&lv| grid.iter().map(|&x| bccg::quantile(lv / 100.0, &f(x), TailMode::ColeApprox).unwrap_or(f64::NAN)).collect())
        .collect();
    let (x, y) = data.included_xy();
    Ok(SimulatedFit {
        x,
        y,
        grid,
        levels,
        fitted,
        truth,
        global_deviance: model.global_deviance,
        edf: [model.m.edf, model.s.edf, model.l.edf],
        converged: model.converged,
        iterations: model.iterations,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON [`DensityTable`].
#[wasm_bindgen]
pub fn density(m: f64, s: f64, l: f64, points: usize) -> Result<String, JsError> {
    to_json(&density_table(m, s, l, points).map_err(|e| JsError::new(&e))?)
}

/// JSON [`SimulatedFit`].
#[wasm_bindgen]
pub fn simulate_and_fit(shape: &str, n: usize, seed: u64, m_df: f64, s_df: f64, l_df: f64) -> Result<String, JsError> {
    to_json(&simulate_fit(shape, n, seed, m_df, s_df, l_df).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen]
pub fn percentile_to_z(percentile: f64) -> Result<f64, JsError> {
    bccg::percentile_to_z(percentile).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn z_to_percentile(z: f64) -> f64 {
    bccg::z_to_percentile(z)
}

//! Tools around a fitted model: outlier flags, sensitivity refits, model
//! comparison, reverse LMS estimation from published charts, and simulation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bccg::{self, BccgParams, TailMode, L_BRANCH_TOL};
use crate::error::{Error, Result};
use crate::fitting::{
    fit_lms, linspace, percentile_curves, predict_lms, zscore, Dataset, FitOptions, FittedModel,
    Hyperparameters, LmsPoint, Row,
};
use crate::normal;
use crate::selection::map_indexed;
use crate::smoothing::{BSplineBasis, PSplineConfig, PenalizedSystem};

/// Grid size shared by the curve-producing tools.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub included: bool,
    /// `None` where the row has no valid z-score (non-positive response).
    pub residual_z: Option<f64>,
    pub percentile: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFlags {
    pub rows: Vec<OutlierRow>,
    pub limits: (f64, f64),
}

impl OutlierFlags {
    pub fn n_flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }

    pub fn flagged_ids(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.flagged).map(|r| r.id.as_str()).collect()
    }
}

pub fn flag_outliers(model: &FittedModel, data: &Dataset, lower_pct: f64, upper_pct: f64) -> Result<OutlierFlags> {
    if !(lower_pct > 0.0 && lower_pct < upper_pct && upper_pct < 100.0) {
        return Err(Error::Domain(format!(
            "outlier limits need 0 < lower < upper < 100, got ({lower_pct}, {upper_pct})"
        )));
    }
    let rows = data
        .rows
        .iter()
        .map(|r| {
            let z = zscore(model, r.x, r.y).ok();
            let pct = z.map(bccg::z_to_percentile);
            let flagged = r.included && pct.is_some_and(|p| p < lower_pct || p > upper_pct);
            OutlierRow {
                id: r.id.clone(),
                x: r.x,
                y: r.y,
                included: r.included,
                residual_z: z,
                percentile: pct,
                flagged,
            }
        })
        .collect();
    Ok(OutlierFlags { rows, limits: (lower_pct, upper_pct) })
}

/// Rows to perturb (by id) and the response shifts applied to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub row_ids: Vec<String>,
    pub dy_up: f64,
    pub dy_down: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub base: FittedModel,
    pub up: FittedModel,
    pub down: FittedModel,
    pub percentile: f64,
    pub x: Vec<f64>,
    pub base_curve: Vec<Option<f64>>,
    pub up_curve: Vec<Option<f64>>,
    pub down_curve: Vec<Option<f64>>,
    /// `up − base`
    pub delta_up: Vec<Option<f64>>,
    /// `down − base`
    pub delta_down: Vec<Option<f64>>,
    /// `up − down`
    pub delta_spread: Vec<Option<f64>>,
}

fn diff(a: &[Option<f64>], b: &[Option<f64>]) -> Vec<Option<f64>> {
    a.iter().zip(b).map(|(a, b)| Some((*a)? - (*b)?)).collect()
}

fn single_curve(model: &FittedModel, grid: &[f64], percentile: f64) -> Result<Vec<Option<f64>>> {
    Ok(percentile_curves(model, grid, &[percentile])?.values.remove(0))
}

pub fn sensitivity(
    data: &Dataset,
    spec: &SensitivitySpec,
    hp: &Hyperparameters,
    percentile: f64,
    opts: &FitOptions,
) -> Result<SensitivityResult> {
    if !(spec.dy_up >= 0.0 && spec.dy_down >= 0.0 && spec.dy_up.is_finite() && spec.dy_down.is_finite()) {
        return Err(Error::Domain("dy_up and dy_down must be finite and >= 0".into()));
    }
    let mut positions = Vec::with_capacity(spec.row_ids.len());
    for id in &spec.row_ids {
        let pos = data
            .rows
            .iter()
            .position(|r| &r.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no row with id {id}")))?;
        if !data.rows[pos].included {
            return Err(Error::InvalidArgument(format!("row {id} is excluded")));
        }
        positions.push(pos);
    }
    let bad: Vec<&str> = positions
        .iter()
        .filter(|&&p| data.rows[p].y - spec.dy_down <= 0.0)
        .map(|&p| data.rows[p].id.as_str())
        .collect();
    if !bad.is_empty() {
        return Err(Error::Domain(format!(
            "shifting down by {} makes the response non-positive for rows {}",
            spec.dy_down,
            bad.join(", ")
        )));
    }

    let shifted = |delta: f64| {
        let mut d = data.clone();
        for &p in &positions {
            d.rows[p].y += delta;
        }
        d
    };
    let variants = [data.clone(), shifted(spec.dy_up), shifted(-spec.dy_down)];
    let mut fits = map_indexed(&variants, |_, d| fit_lms(d, hp, opts).map(|(m, _)| m)).into_iter();
    let base = fits.next().expect("three fits")?;
    let up = fits.next().expect("three fits")?;
    let down = fits.next().expect("three fits")?;

    let x = base.default_grid(DEFAULT_GRID_POINTS);
    let base_curve = single_curve(&base, &x, percentile)?;
    let up_curve = single_curve(&up, &x, percentile)?;
    let down_curve = single_curve(&down, &x, percentile)?;
    Ok(SensitivityResult {
        delta_up: diff(&up_curve, &base_curve),
        delta_down: diff(&down_curve, &base_curve),
        delta_spread: diff(&up_curve, &down_curve),
        base,
        up,
        down,
        percentile,
        x,
        base_curve,
        up_curve,
        down_curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub percentile: f64,
    pub x: Vec<f64>,
    pub curve_a: Vec<Option<f64>>,
    pub curve_b: Vec<Option<f64>>,
    /// `curve_a − curve_b`
    pub delta: Vec<Option<f64>>,
    pub max_abs_delta: f64,
    /// Grid points outside either model's covariate range.
    pub extrapolated: Vec<bool>,
}

pub fn compare_models(a: &FittedModel, b: &FittedModel, percentile: f64, x_grid: &[f64]) -> Result<ModelComparison> {
    let curve_a = single_curve(a, x_grid, percentile)?;
    let curve_b = single_curve(b, x_grid, percentile)?;
    let delta = diff(&curve_a, &curve_b);
    let max_abs_delta = delta.iter().flatten().fold(0.0f64, |m, d| m.max(d.abs()));
    let extrapolated = x_grid.iter().map(|&x| a.is_extrapolated(x) || b.is_extrapolated(x)).collect();
    Ok(ModelComparison {
        percentile,
        x: x_grid.to_vec(),
        curve_a,
        curve_b,
        delta,
        max_abs_delta,
        extrapolated,
    })
}

/// A published percentile chart: `values[j][i]` is the level-`i` curve at `x_values[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartTable {
    pub x_values: Vec<f64>,
    pub percentile_levels: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ChartTable {
    pub fn validate(&self) -> Result<()> {
        if self.percentile_levels.len() < 3 {
            return Err(Error::InvalidArgument("a chart needs at least 3 percentile levels".into()));
        }
        if self.x_values.is_empty() {
            return Err(Error::InvalidArgument("a chart needs at least one x value".into()));
        }
        if self.values.len() != self.x_values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} value rows for {} x values",
                self.values.len(),
                self.x_values.len()
            )));
        }
        if self.percentile_levels.windows(2).any(|w| !(w[0] < w[1]))
            || self.percentile_levels.iter().any(|&p| !(p > 0.0 && p < 100.0))
        {
            return Err(Error::InvalidArgument(
                "percentile levels must be strictly increasing within (0, 100)".into(),
            ));
        }
        if self.x_values.windows(2).any(|w| !(w[0] < w[1])) || self.x_values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("x values must be finite and strictly increasing".into()));
        }
        for (x, row) in self.x_values.iter().zip(&self.values) {
            if row.len() != self.percentile_levels.len() {
                return Err(Error::InvalidArgument(format!("row at x = {x} has {} values", row.len())));
            }
            if row.iter().any(|v| !(v.is_finite() && *v > 0.0)) || row.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument(format!(
                    "values at x = {x} must be positive and strictly increasing in the level"
                )));
            }
        }
        Ok(())
    }

    /// Chart of a known LMS function at the given covariate values.
    pub fn from_lms<F>(x_values: &[f64], levels: &[f64], lms: F) -> Result<ChartTable>
    where
        F: Fn(f64) -> BccgParams,
    {
        let mut values = Vec::with_capacity(x_values.len());
        for &x in x_values {
            let p = lms(x);
            values.push(
                levels
                    .iter()
                    .map(|&lv| bccg::quantile(lv / 100.0, &p, TailMode::ColeApprox))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        Ok(ChartTable { x_values: x_values.to_vec(), percentile_levels: levels.to_vec(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversePoint {
    pub x: f64,
    pub params: BccgParams,
    /// Sum of squared quantile residuals at the returned parameters.
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseResult {
    pub points: Vec<ReversePoint>,
    /// P-spline smooths of L, M and ln S over x, when requested.
    pub smoothed: Option<Vec<LmsPoint>>,
}

impl ReverseResult {
    pub fn unconverged(&self) -> Vec<f64> {
        self.points.iter().filter(|p| !p.converged).map(|p| p.x).collect()
    }
}

/// Per-x least-squares fit of the Cole quantile function to a chart, then an
/// optional P-spline smooth (extra df over a line) of each parameter.
pub fn reverse_lms(chart: &ChartTable, smooth_df: Option<f64>) -> Result<ReverseResult> {
    chart.validate()?;
    let z: Vec<f64> = chart.percentile_levels.iter().map(|&p| normal::quantile(p / 100.0)).collect();
    let points = map_indexed(&chart.values, |j, row| fit_quantiles(chart.x_values[j], &z, row));
    let smoothed = match smooth_df {
        Some(df) => Some(smooth_params(&points, df)?),
        None => None,
    };
    Ok(ReverseResult { points, smoothed })
}

/// Linear interpolation of chart values in z, extrapolating from the end segments.
fn value_at_z(z: &[f64], v: &[f64], target: f64) -> f64 {
    let k = z.len();
    let seg = (1..k).find(|&i| z[i] >= target).unwrap_or(k - 1);
    let (z0, z1, v0, v1) = (z[seg - 1], z[seg], v[seg - 1], v[seg]);
    v0 + (v1 - v0) * (target - z0) / (z1 - z0)
}

/// Cole quantile at `(ln M, ln S, L)` and its gradient; `None` past the truncation point.
fn quantile_and_grad(theta: &Vector3<f64>, z: f64) -> Option<(f64, Vector3<f64>)> {
    let (m, s, l) = (theta[0].exp(), theta[1].exp(), theta[2]);
    let t = s * z;
    let lt = l * t;
    let a = 1.0 + lt;
    if a <= 0.0 {
        return None;
    }
    let (log_ratio, d_l) = if lt.abs() < 1e-4 || l.abs() < L_BRANCH_TOL {
        // ln(a)/L and its L-derivative by series in L·t.
        (
            t - l * t * t / 2.0 + l * l * t * t * t / 3.0,
            -t * t / 2.0 + 2.0 * l * t * t * t / 3.0 - 3.0 * l * l * t.powi(4) / 4.0,
        )
    } else {
        (a.ln() / l, -a.ln() / (l * l) + t / (l * a))
    };
    let q = m * log_ratio.exp();
    if !q.is_finite() {
        return None;
    }
    Some((q, Vector3::new(q, q * t / a, q * d_l)))
}

fn objective(theta: &Vector3<f64>, z: &[f64], v: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    for (&zi, &vi) in z.iter().zip(v) {
        let (q, _) = quantile_and_grad(theta, zi)?;
        total += (q - vi) * (q - vi);
    }
    Some(total)
}

fn fit_quantiles(x: f64, z: &[f64], v: &[f64]) -> ReversePoint {
    const MAX_ITER: usize = 500;
    let m0 = value_at_z(z, v, 0.0);
    let q = normal::quantile(0.75);
    let spread = (value_at_z(z, v, q) - value_at_z(z, v, -q)) / (2.0 * q * m0);
    let s0 = if spread.is_finite() && spread > 0.0 { spread } else { 0.1 };
    let mut theta = Vector3::new(m0.ln(), s0.ln(), 1.0);
    let initial = objective(&theta, z, v).unwrap_or(f64::INFINITY);
    let mut current = initial;
    let scale: f64 = v.iter().map(|v| v * v).sum();
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        if current <= 1e-28 * scale {
            converged = true;
            break;
        }
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&zi, &vi) in z.iter().zip(v) {
            let (qi, g) = quantile_and_grad(&theta, zi).expect("current point is feasible");
            jtj += g * g.transpose();
            jtr += g * (qi - vi);
        }
        if jtr.norm() <= 1e-14 * scale.sqrt() * jtj.diagonal().map(f64::sqrt).norm().max(1.0) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += mu * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = theta + step;
            match objective(&trial, z, v) {
                Some(f) if f < current => {
                    let relative = (current - f) / current.max(f64::MIN_POSITIVE);
                    let small_step = step.norm() < 1e-13 * (1.0 + theta.norm());
                    theta = trial;
                    current = f;
                    mu = (mu / 10.0).max(1e-12);
                    improved = true;
                    if relative < 1e-15 || small_step {
                        converged = true;
                    }
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !improved {
            // No descent direction left at machine precision.
            converged = current.sqrt() <= 1e-6 * scale.sqrt();
            break;
        }
        if converged {
            break;
        }
    }

    ReversePoint {
        x,
        params: BccgParams { m: theta[0].exp(), s: theta[1].exp(), l: theta[2] },
        objective: current,
        initial_objective: initial,
        iterations,
        converged,
    }
}

fn smooth_params(points: &[ReversePoint], df: f64) -> Result<Vec<LmsPoint>> {
    if !(0.0..=20.0).contains(&df) {
        return Err(Error::InvalidArgument(format!("smoothing df must lie in [0, 20], got {df}")));
    }
    let good: Vec<&ReversePoint> = points.iter().filter(|p| p.converged).collect();
    let x: Vec<f64> = good.iter().map(|p| p.x).collect();
    if x.len() < 4 {
        return Err(Error::InvalidArgument(
            "smoothing needs at least 4 converged chart positions".into(),
        ));
    }
    let config = PSplineConfig::default();
    let basis = BSplineBasis::new(
        x[0],
        x[x.len() - 1],
        config.knots_for(x.len()),
        config.degree,
        config.penalty_order,
    )?;
    let (design, _) = basis.design(&x);
    let penalty = crate::smoothing::difference_penalty(basis.n_basis(), config.penalty_order)?;
    let system = PenalizedSystem::new(&design, &vec![1.0; x.len()], &penalty)?;
    let target = (df + config.penalty_order as f64).min(system.max_edf());
    let lambda = system.lambda_for_edf(target)?;
    let smooth = |values: Vec<f64>| {
        let rhs = design.transpose() * DVector::from_vec(values);
        system.solve_rhs(&rhs, lambda)
    };
    let c_l = smooth(good.iter().map(|p| p.params.l).collect());
    let c_m = smooth(good.iter().map(|p| p.params.m).collect());
    let c_s = smooth(good.iter().map(|p| p.params.s.ln()).collect());
    let all_x: Vec<f64> = points.iter().map(|p| p.x).collect();
    let (full, _): (DMatrix<f64>, _) = basis.design(&all_x);
    let (l, m, log_s) = (&full * c_l, &full * c_m, &full * c_s);
    Ok(all_x
        .iter()
        .enumerate()
        .map(|(j, &x)| LmsPoint { x, l: l[j], m: m[j], s: log_s[j].exp(), extrapolated: false })
        .collect())
}

/// Where simulated covariates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateMode {
    Uniform,
    #[default]
    ResampleTraining,
}

/// A synthetic dataset of `n` rows drawn from the fitted model.
pub fn monte_carlo(model: &FittedModel, n: usize, mode: CovariateMode, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if mode == CovariateMode::ResampleTraining && model.training_x.is_empty() {
        return Err(Error::InvalidArgument("model carries no training covariates to resample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = model.x_range;
    let xs: Vec<f64> = (0..n)
        .map(|_| match mode {
            CovariateMode::Uniform => {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            }
            CovariateMode::ResampleTraining => model.training_x[rng.random_range(0..model.training_x.len())],
        })
        .collect();
    let points = predict_lms(model, &xs);
    let mut data = Dataset::new(model.x_label.clone(), model.y_label.clone());
    for (i, p) in points.iter().enumerate() {
        let params = p.params()?;
        let y = bccg::sample_with(&params, 1, &mut rng)?[0];
        data.push(Row { id: format!("sim{}", i + 1), x: p.x, y, included: true });
    }
    Ok(data)
}

/// `n` rows with x uniform on `x_range` and y drawn from `truth(x)`.
pub fn simulate_lms<F>(truth: F, n: usize, x_range: (f64, f64), seed: u64) -> Result<Dataset>
where
    F: Fn(f64) -> BccgParams,
{
    let (lo, hi) = x_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad covariate range ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new("x", "y");
    for i in 0..n {
        let x = rng.random_range(lo..=hi);
        let y = bccg::sample_with(&truth(x), 1, &mut rng)?[0];
        data.push(Row { id: (i + 1).to_string(), x, y, included: true });
    }
    Ok(data)
}

/// Default 200-point grid over the overlap of both training ranges.
pub fn shared_grid(a: &FittedModel, b: &FittedModel) -> Vec<f64> {
    linspace(a.x_range.0.max(b.x_range.0), a.x_range.1.min(b.x_range.1), DEFAULT_GRID_POINTS)
}

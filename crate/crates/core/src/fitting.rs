//! Datasets, the LMS fitter, and evaluation of fitted models.
//!
//! The fitter maximizes the penalized log-likelihood by cycling over the
//! three parameters (M, then S, then L). Each visit performs one local
//! scoring step: per-observation scores `sᵢ = ∂ℓᵢ/∂ηᵢ`, working weights
//! `wᵢ = max(sᵢ², 1e-10)`, working response `uᵢ = ηᵢ + sᵢ/wᵢ`, and a
//! penalized weighted least-squares update whose λ is recalibrated to the
//! requested edf. Steps that raise the global deviance are halved.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bccg::{self, BccgParams, TailMode};
use crate::error::{Error, Result};
use crate::smoothing::{target_edf, PSplineConfig, PenalizedSystem, SmootherBasis, SmootherSpec};

/// Fewer included rows than this is refused.
pub const MIN_FIT_ROWS: usize = 20;
/// Fewer included rows than this fits with a warning.
pub const RECOMMENDED_FIT_ROWS: usize = 50;

const WEIGHT_FLOOR: f64 = 1e-10;
const ASCENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    /// NaN (JSON `null`) when the source cell was not a number.
    #[serde(with = "nullable")]
    pub x: f64,
    #[serde(with = "nullable")]
    pub y: f64,
    pub included: bool,
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Covariate/response observations with per-row inclusion flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Row>,
    pub x_label: String,
    pub y_label: String,
}

impl Dataset {
    pub fn new(x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Dataset { rows: Vec::new(), x_label: x_label.into(), y_label: y_label.into() }
    }

    /// All rows included, ids `1..=n`.
    pub fn from_xy(x: &[f64], y: &[f64]) -> Self {
        let mut data = Dataset::new("x", "y");
        for (i, (&x, &y)) in x.iter().zip(y).enumerate() {
            data.push(Row { id: (i + 1).to_string(), x, y, included: true });
        }
        data
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn included(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.included)
    }

    pub fn n_included(&self) -> usize {
        self.included().count()
    }

    pub fn included_xy(&self) -> (Vec<f64>, Vec<f64>) {
        self.included().map(|r| (r.x, r.y)).unzip()
    }

    /// Sets the flag of the row with this id; returns false if no such row.
    pub fn set_included(&mut self, id: &str, included: bool) -> bool {
        match self.rows.iter_mut().find(|r| r.id == id) {
            Some(row) => {
                row.included = included;
                true
            }
            None => false,
        }
    }

    /// New dataset holding the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            x_label: self.x_label.clone(),
            y_label: self.y_label.clone(),
        }
    }

    /// Checks the invariants a fit needs; returns warnings that do not block it.
    pub fn validate_for_fit(&self) -> Result<Vec<String>> {
        let mut n = 0;
        for r in self.included() {
            if !r.x.is_finite() {
                return Err(Error::Dataset(format!("row {}: covariate is not finite", r.id)));
            }
            if !(r.y.is_finite() && r.y > 0.0) {
                return Err(Error::Dataset(format!(
                    "row {}: response must be finite and > 0, got {}",
                    r.id, r.y
                )));
            }
            n += 1;
        }
        if n < MIN_FIT_ROWS {
            return Err(Error::Dataset(format!(
                "{n} included rows; at least {MIN_FIT_ROWS} are required"
            )));
        }
        let first = self.included().next().map(|r| r.x);
        if self.included().all(|r| Some(r.x) == first) {
            return Err(Error::DegenerateCovariate(
                "included rows need at least two distinct covariate values".into(),
            ));
        }
        let mut warnings = Vec::new();
        if n < RECOMMENDED_FIT_ROWS {
            warnings.push(format!(
                "only {n} included rows; at least {RECOMMENDED_FIT_ROWS} are recommended"
            ));
        }
        Ok(warnings)
    }
}

/// Smoother choices for the three parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub m: SmootherSpec,
    pub s: SmootherSpec,
    pub l: SmootherSpec,
}

impl Hyperparameters {
    /// P-spline smoothers with the given extra degrees of freedom.
    pub fn lms(m_df: f64, s_df: f64, l_df: f64) -> Self {
        Hyperparameters {
            m: SmootherSpec::PSpline { df_extra: m_df },
            s: SmootherSpec::PSpline { df_extra: s_df },
            l: SmootherSpec::PSpline { df_extra: l_df },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.m.validate()?;
        self.s.validate()?;
        self.l.validate()
    }

    pub fn m_df(&self) -> f64 {
        self.dfs().0
    }

    pub fn s_df(&self) -> f64 {
        self.dfs().1
    }

    pub fn l_df(&self) -> f64 {
        self.dfs().2
    }

    /// `(m_df, s_df, l_df)` with polynomial smoothers reported as their degree.
    pub fn dfs(&self) -> (f64, f64, f64) {
        let df = |s: &SmootherSpec| match *s {
            SmootherSpec::PSpline { df_extra } => df_extra,
            SmootherSpec::Poly { degree } => degree as f64,
        };
        (df(&self.m), df(&self.s), df(&self.l))
    }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters::lms(1.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_cycles: usize,
    pub gd_tol: f64,
    pub max_halvings: usize,
    pub pspline: PSplineConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_cycles: 100, gd_tol: 1e-3, max_halvings: 10, pspline: PSplineConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parameter {
    M,
    S,
    L,
}

impl Parameter {
    pub const ALL: [Parameter; 3] = [Parameter::M, Parameter::S, Parameter::L];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::M => "M",
            Parameter::S => "S",
            Parameter::L => "L",
        }
    }

    pub fn link(self) -> Link {
        match self {
            Parameter::S => Link::Log,
            _ => Link::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
}

/// One additive predictor: smoother layout, coefficients and calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorState {
    pub spec: SmootherSpec,
    pub link: Link,
    pub basis: SmootherBasis,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub edf: f64,
}

impl PredictorState {
    /// Linear predictor at new covariate values, with extrapolation flags.
    pub fn eta(&self, xs: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let (design, flags) = self.basis.design(xs);
        let c = DVector::from_column_slice(&self.coefficients);
        ((design * c).iter().copied().collect(), flags)
    }

    fn penalty_value(&self) -> f64 {
        self.lambda * self.basis.penalty().quadratic_form(&DVector::from_column_slice(&self.coefficients))
    }
}

/// A fitted LMS model; immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub m: PredictorState,
    pub s: PredictorState,
    pub l: PredictorState,
    pub hyperparameters: Hyperparameters,
    pub n: usize,
    pub global_deviance: f64,
    pub penalized_deviance: f64,
    pub total_edf: f64,
    pub converged: bool,
    pub iterations: usize,
    pub x_range: (f64, f64),
    pub x_label: String,
    pub y_label: String,
    pub training_x: Vec<f64>,
    pub options: FitOptions,
}

impl FittedModel {
    pub fn predictor(&self, p: Parameter) -> &PredictorState {
        match p {
            Parameter::M => &self.m,
            Parameter::S => &self.s,
            Parameter::L => &self.l,
        }
    }

    pub fn is_extrapolated(&self, x: f64) -> bool {
        x < self.x_range.0 || x > self.x_range.1
    }

    /// Evenly spaced grid of `n` points over the training covariate range.
    pub fn default_grid(&self, n: usize) -> Vec<f64> {
        linspace(self.x_range.0, self.x_range.1, n)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Diagnostics collected while fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Global deviance at the start and after every outer cycle.
    pub deviance_trace: Vec<f64>,
    /// `-2 l_p` after every outer cycle, with that cycle's λs.
    pub penalized_trace: Vec<f64>,
    pub step_halvings: usize,
    pub rejected_steps: usize,
    pub warnings: Vec<String>,
}

/// Predicted distribution at one covariate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmsPoint {
    pub x: f64,
    pub l: f64,
    pub m: f64,
    pub s: f64,
    pub extrapolated: bool,
}

impl LmsPoint {
    pub fn params(&self) -> Result<BccgParams> {
        BccgParams::new(self.m, self.s, self.l)
    }
}

struct Predictor {
    param: Parameter,
    basis: SmootherBasis,
    design: DMatrix<f64>,
    penalty: crate::smoothing::Penalty,
    target_edf: f64,
    spec: SmootherSpec,
    coefficients: DVector<f64>,
    eta: DVector<f64>,
    lambda: f64,
    edf: f64,
}

impl Predictor {
    fn new(param: Parameter, spec: &SmootherSpec, x: &[f64], opts: &FitOptions) -> Result<Self> {
        let basis = SmootherBasis::build(spec, x, &opts.pspline)?;
        let (design, _) = basis.design(x);
        let penalty = basis.penalty();
        let target = target_edf(spec, opts.pspline.penalty_order);
        let q = basis.n_basis();
        Ok(Predictor {
            param,
            basis,
            design,
            penalty,
            target_edf: target,
            spec: *spec,
            coefficients: DVector::zeros(q),
            eta: DVector::zeros(x.len()),
            lambda: 0.0,
            edf: 0.0,
        })
    }

    fn set_coefficients(&mut self, c: DVector<f64>) {
        self.eta = &self.design * &c;
        self.coefficients = c;
    }

    fn system(&self, weights: &[f64]) -> Result<(PenalizedSystem, f64)> {
        let system = PenalizedSystem::new(&self.design, weights, &self.penalty)?;
        let lambda = match self.spec {
            SmootherSpec::PSpline { .. } => system.lambda_for_edf(self.target_edf)?,
            SmootherSpec::Poly { .. } => 0.0,
        };
        Ok((system, lambda))
    }

    fn into_state(self) -> PredictorState {
        PredictorState {
            spec: self.spec,
            link: self.param.link(),
            basis: self.basis,
            coefficients: self.coefficients.iter().copied().collect(),
            lambda: self.lambda,
            edf: self.edf,
        }
    }

    fn penalty_value(&self) -> f64 {
        self.lambda * self.penalty.quadratic_form(&self.coefficients)
    }
}

fn params_at(m: &DVector<f64>, log_s: &DVector<f64>, l: &DVector<f64>, i: usize) -> BccgParams {
    BccgParams { m: m[i], s: log_s[i].exp(), l: l[i] }
}

/// Global deviance for the given linear predictors; +∞ if any parameter is invalid.
fn deviance_of(y: &[f64], m: &DVector<f64>, log_s: &DVector<f64>, l: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let p = params_at(m, log_s, l, i);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        total += p.log_density_unchecked(yi);
    }
    let gd = -2.0 * total;
    if gd.is_nan() {
        f64::INFINITY
    } else {
        gd
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Fits the LMS model to the included rows of `data`.
pub fn fit_lms(data: &Dataset, hp: &Hyperparameters, opts: &FitOptions) -> Result<(FittedModel, FitReport)> {
    hp.validate()?;
    if opts.max_cycles == 0 || !(opts.gd_tol > 0.0) {
        return Err(Error::InvalidArgument("max_cycles must be >= 1 and gd_tol > 0".into()));
    }
    let mut report = FitReport { warnings: data.validate_for_fit()?, ..FitReport::default() };
    let (x, y) = data.included_xy();
    let n = x.len();

    let mut predictors = [
        Predictor::new(Parameter::M, &hp.m, &x, opts)?,
        Predictor::new(Parameter::S, &hp.s, &x, opts)?,
        Predictor::new(Parameter::L, &hp.l, &x, opts)?,
    ];

    initialize(&mut predictors, &y)?;
    let mut gd = deviance_of(&y, &predictors[0].eta, &predictors[1].eta, &predictors[2].eta);
    if !gd.is_finite() {
        return Err(Error::Divergence { cycle: 0, parameter: "initialization" });
    }
    report.deviance_trace.push(gd);

    let mut converged = false;
    let mut cycles = 0;
    for cycle in 1..=opts.max_cycles {
        cycles = cycle;
        let gd_start = gd;
        for k in 0..3 {
            gd = scoring_step(&mut predictors, k, &y, gd, opts, cycle, &mut report)?;
        }
        report.deviance_trace.push(gd);
        report
            .penalized_trace
            .push(gd + predictors.iter().map(Predictor::penalty_value).sum::<f64>());
        if (gd_start - gd).abs() < opts.gd_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        report.warnings.push(format!(
            "did not converge within {} cycles (last change above {})",
            opts.max_cycles, opts.gd_tol
        ));
    }

    let penalized = gd + predictors.iter().map(Predictor::penalty_value).sum::<f64>();
    let [m, s, l] = predictors;
    let total_edf = m.edf + s.edf + l.edf;
    let x_range = (
        x.iter().copied().fold(f64::INFINITY, f64::min),
        x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let model = FittedModel {
        m: m.into_state(),
        s: s.into_state(),
        l: l.into_state(),
        hyperparameters: *hp,
        n,
        global_deviance: gd,
        penalized_deviance: penalized,
        total_edf,
        converged,
        iterations: cycles,
        x_range,
        x_label: data.x_label.clone(),
        y_label: data.y_label.clone(),
        training_x: x,
        options: *opts,
    };
    Ok((model, report))
}

/// M from a penalized least-squares smooth of `y` (overall median if that
/// smooth leaves the positive half-line), S constant at the spread of
/// `ln(y/M)`, L constant at 1.
fn initialize(predictors: &mut [Predictor; 3], y: &[f64]) -> Result<()> {
    let ones = vec![1.0; y.len()];
    let m_pred = &mut predictors[0];
    let (system, lambda) = m_pred.system(&ones)?;
    let rhs = m_pred.design.transpose() * DVector::from_column_slice(y);
    let smooth = system.solve_rhs(&rhs, lambda);
    let fitted = &m_pred.design * &smooth;
    if fitted.iter().all(|&v| v.is_finite() && v > 0.0) {
        m_pred.set_coefficients(smooth);
    } else {
        let c = m_pred.basis.constant_coefficients(median(y));
        m_pred.set_coefficients(c);
    }
    m_pred.lambda = lambda;
    m_pred.edf = system.edf(lambda);

    let log_ratio: Vec<f64> = y.iter().zip(m_pred.eta.iter()).map(|(y, m)| (y / m).ln()).collect();
    let s0 = std_dev(&log_ratio).max(1e-3);
    let c = predictors[1].basis.constant_coefficients(s0.ln());
    predictors[1].set_coefficients(c);
    let c = predictors[2].basis.constant_coefficients(1.0);
    predictors[2].set_coefficients(c);
    Ok(())
}

fn scoring_step(
    predictors: &mut [Predictor; 3],
    k: usize,
    y: &[f64],
    gd: f64,
    opts: &FitOptions,
    cycle: usize,
    report: &mut FitReport,
) -> Result<f64> {
    let n = y.len();
    let param = predictors[k].param;
    let mut weights = Vec::with_capacity(n);
    let mut working = Vec::with_capacity(n);
    {
        let (m, s, l) = (&predictors[0].eta, &predictors[1].eta, &predictors[2].eta);
        let eta = &predictors[k].eta;
        for (i, &yi) in y.iter().enumerate() {
            let sc = bccg::scores(yi, &params_at(m, s, l, i));
            let score = match param {
                Parameter::M => sc.m,
                Parameter::S => sc.log_s,
                Parameter::L => sc.l,
            };
            if !score.is_finite() {
                return Err(Error::Divergence { cycle, parameter: param.name() });
            }
            let w = (score * score).max(WEIGHT_FLOOR);
            weights.push(w);
            working.push(eta[i] + score / w);
        }
    }

    let pred = &predictors[k];
    let (system, lambda) = pred.system(&weights).map_err(|e| match e {
        Error::Numerical { message, condition } => Error::Numerical {
            message: format!("cycle {cycle}, parameter {}: {message}", param.name()),
            condition,
        },
        other => other,
    })?;
    let wu = DVector::from_iterator(n, weights.iter().zip(&working).map(|(w, u)| w * u));
    let rhs = pred.design.transpose() * wu;
    let proposal = system.solve_rhs(&rhs, lambda);
    if proposal.iter().any(|c| !c.is_finite()) {
        return Err(Error::Divergence { cycle, parameter: param.name() });
    }

    let old = pred.coefficients.clone();
    let direction = &proposal - &old;
    let mut accepted = None;
    let mut step = 1.0;
    for halving in 0..=opts.max_halvings {
        let candidate = &old + &direction * step;
        let eta = &pred.design * &candidate;
        let trial = {
            let mut etas = [&predictors[0].eta, &predictors[1].eta, &predictors[2].eta];
            etas[k] = &eta;
            deviance_of(y, etas[0], etas[1], etas[2])
        };
        if trial.is_finite() && trial <= gd + ASCENT_SLACK {
            report.step_halvings += halving;
            accepted = Some((candidate, trial));
            break;
        }
        step *= 0.5;
    }

    let pred = &mut predictors[k];
    pred.lambda = lambda;
    pred.edf = system.edf(lambda);
    match accepted {
        Some((c, trial)) => {
            pred.set_coefficients(c);
            Ok(trial)
        }
        None => {
            report.step_halvings += opts.max_halvings;
            report.rejected_steps += 1;
            Ok(gd)
        }
    }
}

/// Per-point (L, M, S) on a covariate grid.
pub fn predict_lms(model: &FittedModel, x_grid: &[f64]) -> Vec<LmsPoint> {
    let (m, _) = model.m.eta(x_grid);
    let (log_s, _) = model.s.eta(x_grid);
    let (l, _) = model.l.eta(x_grid);
    x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| LmsPoint {
            x,
            l: l[i],
            m: m[i],
            s: log_s[i].exp(),
            extrapolated: model.is_extrapolated(x),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevianceEvaluation {
    pub deviance: f64,
    pub n: usize,
    /// Rows whose covariate lies outside the training range.
    pub extrapolated: usize,
}

/// `-2 Σ ln f(yᵢ)` over the included rows of `data` under `model`.
pub fn global_deviance(model: &FittedModel, data: &Dataset) -> Result<DevianceEvaluation> {
    let (x, y) = data.included_xy();
    let points = predict_lms(model, &x);
    let mut total = 0.0;
    let mut extrapolated = 0;
    for (p, &yi) in points.iter().zip(&y) {
        let params = p.params().map_err(|e| {
            Error::Domain(format!("predicted parameters invalid at x = {}: {e}", p.x))
        })?;
        total += bccg::log_density(yi, &params)?;
        extrapolated += p.extrapolated as usize;
    }
    Ok(DevianceEvaluation { deviance: -2.0 * total, n: y.len(), extrapolated })
}

/// Percentile curves on a grid; `values[level][point]` is `None` where the
/// chart formula has no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileCurves {
    pub x: Vec<f64>,
    pub levels: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
    pub lms: Vec<LmsPoint>,
}

impl PercentileCurves {
    pub fn curve(&self, level: f64) -> Option<&[Option<f64>]> {
        self.levels.iter().position(|&l| l == level).map(|i| self.values[i].as_slice())
    }
}

pub fn percentile_curves(model: &FittedModel, x_grid: &[f64], percentiles: &[f64]) -> Result<PercentileCurves> {
    for &p in percentiles {
        if !(p > 0.0 && p < 100.0) {
            return Err(Error::Domain(format!("percentile must lie in (0, 100), got {p}")));
        }
    }
    let lms = predict_lms(model, x_grid);
    let values = percentiles
        .iter()
        .map(|&pct| {
            lms.iter()
                .map(|pt| {
                    pt.params()
                        .and_then(|p| bccg::quantile(pct / 100.0, &p, TailMode::ColeApprox))
                        .ok()
                })
                .collect()
        })
        .collect();
    Ok(PercentileCurves { x: x_grid.to_vec(), levels: percentiles.to_vec(), values, lms })
}

/// Cole z-score of a measurement `y` at covariate `x`.
pub fn zscore(model: &FittedModel, x: f64, y: f64) -> Result<f64> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::Domain(format!("measurement must be finite and > 0, got {y}")));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("covariate must be finite, got {x}")));
    }
    let point = predict_lms(model, &[x])[0];
    bccg::z_transform(y, &point.params()?)
}

impl FittedModel {
    /// `-2 l_p` at the stored coefficients and λs.
    pub fn penalized_deviance_now(&self) -> f64 {
        self.global_deviance + Parameter::ALL.iter().map(|&p| self.predictor(p).penalty_value()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_truth(n: usize, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut data = Dataset::new("age", "value");
        for i in 0..n {
            let x: f64 = rng.random_range(0.0..100.0);
            let p = BccgParams::new(40.0 + 0.2 * x, 0.12, 0.0).unwrap();
            let y = bccg::sample_with(&p, 1, &mut rng).unwrap()[0];
            data.push(Row { id: format!("r{i}"), x, y, included: true });
        }
        data
    }

    #[test]
    fn missing_values_serialize_as_null() {
        let row = Row { id: "a".into(), x: 1.5, y: f64::NAN, included: false };
        let json = serde_json::to_string(&row).unwrap();
        assert_eq!(json, r#"{"id":"a","x":1.5,"y":null,"included":false}"#);
        let back: Row = serde_json::from_str(&json).unwrap();
        assert!(back.y.is_nan() && back.x == 1.5);
    }

    #[test]
    fn dataset_validation() {
        let mut d = Dataset::from_xy(&[1.0; 25], &[2.0; 25]);
        assert!(matches!(d.validate_for_fit(), Err(Error::DegenerateCovariate(_))));
        d.rows[0].x = 3.0;
        assert_eq!(d.validate_for_fit().unwrap().len(), 1);
        d.rows[1].y = -1.0;
        assert!(matches!(d.validate_for_fit(), Err(Error::Dataset(_))));
        for r in d.rows.iter_mut().skip(1).take(6) {
            r.included = false;
        }
        assert!(matches!(d.validate_for_fit(), Err(Error::Dataset(_))));
        assert!(d.set_included("3", true));
        assert!(!d.set_included("nope", true));
    }

    #[test]
    fn trace_is_monotone_and_edf_adds_up() {
        let data = linear_truth(400, 11);
        let (model, report) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
        assert!(model.converged);
        for w in report.deviance_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        let sum = model.m.edf + model.s.edf + model.l.edf;
        assert!((model.total_edf - sum).abs() < 1e-12);
        // m_df = 1 → edf 3, s_df = l_df = 0 → edf 2.
        assert!((model.m.edf - 3.0).abs() < 2e-3);
        assert!((model.s.edf - 2.0).abs() < 2e-3);
        assert!((model.l.edf - 2.0).abs() < 2e-3);
    }

    #[test]
    fn deviance_is_order_invariant_and_matches_training() {
        let data = linear_truth(300, 5);
        let (model, _) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
        let gd = global_deviance(&model, &data).unwrap();
        assert!((gd.deviance - model.global_deviance).abs() < 1e-8 * gd.deviance.abs());
        let mut reversed = data.clone();
        reversed.rows.reverse();
        let gd_rev = global_deviance(&model, &reversed).unwrap();
        assert!((gd.deviance - gd_rev.deviance).abs() < 1e-9 * gd.deviance.abs());
        assert_eq!(gd.extrapolated, 0);
    }

    #[test]
    fn fit_is_deterministic() {
        let data = linear_truth(200, 9);
        let hp = Hyperparameters::lms(2.0, 1.0, 0.0);
        let a = fit_lms(&data, &hp, &FitOptions::default()).unwrap().0;
        let b = fit_lms(&data, &hp, &FitOptions::default()).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_rows_is_refused() {
        let data = linear_truth(19, 1);
        assert!(matches!(
            fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn zscore_and_curves_are_consistent() {
        let data = linear_truth(300, 2);
        let (model, _) = fit_lms(&data, &Hyperparameters::default(), &FitOptions::default()).unwrap();
        let grid = model.default_grid(25);
        let curves = percentile_curves(&model, &grid, &crate::DEFAULT_PERCENTILES).unwrap();
        for (j, &x) in grid.iter().enumerate() {
            let p3 = curves.curve(3.0).unwrap()[j].unwrap();
            let p50 = curves.curve(50.0).unwrap()[j].unwrap();
            let p75 = curves.curve(75.0).unwrap()[j].unwrap();
            let p97 = curves.curve(97.0).unwrap()[j].unwrap();
            assert!(p3 <= p50 && p50 <= p97);
            assert!((zscore(&model, x, p75).unwrap() - 0.674_489_750_196_081_7).abs() < 1e-6);
            assert!(zscore(&model, x, curves.lms[j].m).unwrap().abs() < 1e-12);
        }
        assert!(matches!(zscore(&model, 50.0, 0.0), Err(Error::Domain(_))));
        assert!(percentile_curves(&model, &grid, &[0.0]).is_err());
    }

    #[test]
    fn polynomial_predictor_fits() {
        let data = linear_truth(300, 4);
        let hp = Hyperparameters {
            m: SmootherSpec::Poly { degree: 2 },
            ..Hyperparameters::default()
        };
        let (model, report) = fit_lms(&data, &hp, &FitOptions::default()).unwrap();
        assert!(model.converged, "{report:?}");
        assert!((model.m.edf - 3.0).abs() < 1e-6);
        let pred = predict_lms(&model, &[50.0])[0];
        assert!((pred.m - 50.0).abs() < 1.5);
    }
}

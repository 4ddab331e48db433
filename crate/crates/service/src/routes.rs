use std::sync::Arc;

use axum::extract::{FromRequest, Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use refcurve::analysis::{self, CovariateMode, SensitivitySpec};
use refcurve::bccg;
use refcurve::fitting::linspace;
use refcurve::io::{self, ModelDocument};
use refcurve::selection::{self, DfRange, GridRanges};
use refcurve::{Dataset, FitOptions, Hyperparameters};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::jobs::Job;
use crate::store::ModelEntry;
use crate::AppState;

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

#[derive(FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
struct ApiJson<T>(T);

pub fn router() -> Router<AppState> {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/datasets", post(create_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/rows", get(get_rows).patch(patch_rows))
        .route("/fit", post(fit))
        .route("/select", post(select))
        .route("/cv", post(cv))
        .route("/jobs/{id}", get(get_job))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/curves", get(get_curves))
        .route("/outliers", post(outliers))
        .route("/sensitivity", post(sensitivity))
        .route("/compare", post(compare))
        .route("/zscore", post(zscore))
        .route("/convert", post(convert))
        .route("/simulate", post(simulate))
        .route("/reverse", post(reverse))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(|e| ApiError::internal(e.to_string()))
}

/// Copy of a dataset, checked against an expected revision when one is given.
fn dataset_at(state: &AppState, id: &str, revision: Option<u64>) -> Result<(Dataset, u64), ApiError> {
    let store = state.store();
    let entry = store.datasets.get(id).ok_or_else(|| ApiError::not_found("dataset", id))?;
    match revision {
        Some(r) if r != entry.revision => Err(ApiError::stale(entry.revision, r)),
        _ => Ok((entry.dataset.clone(), entry.revision)),
    }
}

fn model(state: &AppState, id: &str) -> Result<Arc<ModelEntry>, ApiError> {
    state.store().models.get(id).cloned().ok_or_else(|| ApiError::not_found("model", id))
}

/// Either full smoother specs or plain P-spline dfs.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum HpInput {
    Specs(Hyperparameters),
    Dfs { m_df: f64, s_df: f64, l_df: f64 },
}

impl HpInput {
    fn resolve(hp: Option<HpInput>) -> Result<Hyperparameters, ApiError> {
        let hp = match hp {
            None => Hyperparameters::default(),
            Some(HpInput::Specs(hp)) => hp,
            Some(HpInput::Dfs { m_df, s_df, l_df }) => Hyperparameters::lms(m_df, s_df, l_df),
        };
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OptionsInput {
    max_cycles: Option<usize>,
    gd_tol: Option<f64>,
}

impl OptionsInput {
    fn resolve(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions { max_cycles: self.max_cycles.unwrap_or(d.max_cycles), gd_tol: self.gd_tol.unwrap_or(d.gd_tol), ..d }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateDataset {
    csv: String,
    x: String,
    y: String,
    label: Option<String>,
}

async fn create_dataset(State(state): State<AppState>, ApiJson(req): ApiJson<CreateDataset>) -> ApiResult<(StatusCode, Json<Value>)> {
    let report = io::import_csv(req.csv.as_bytes(), &req.x, &req.y)?;
    let (n, n_included) = (report.dataset.len(), report.dataset.n_included());
    let id = state.store_mut().insert_dataset(report.dataset, req.label);
    state.persist()?;
    let body = json!({
        "dataset_id": id,
        "revision": 0,
        "n": n,
        "n_included": n_included,
        "warnings": report.warnings,
    });
    Ok((StatusCode::CREATED, Json(body)))
}

fn dataset_summary(id: &str, entry: &crate::store::DatasetEntry) -> Value {
    json!({
        "dataset_id": id,
        "revision": entry.revision,
        "label": entry.label,
        "x_label": entry.dataset.x_label,
        "y_label": entry.dataset.y_label,
        "n": entry.dataset.len(),
        "n_included": entry.dataset.n_included(),
    })
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let store = state.store();
    let entry = store.datasets.get(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    Ok(Json(dataset_summary(&id, entry)))
}

async fn get_rows(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let store = state.store();
    let entry = store.datasets.get(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    let mut body = dataset_summary(&id, entry);
    body["rows"] = to_value(&entry.dataset.rows)?;
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowChange {
    id: String,
    included: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchRows {
    changes: Vec<RowChange>,
    revision: Option<u64>,
}

async fn patch_rows(State(state): State<AppState>, Path(id): Path<String>, ApiJson(req): ApiJson<PatchRows>) -> ApiResult {
    let body = {
        let mut store = state.store_mut();
        let entry = store.datasets.get_mut(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
        if let Some(r) = req.revision.filter(|&r| r != entry.revision) {
            return Err(ApiError::stale(entry.revision, r));
        }
        for c in &req.changes {
            let row = entry.dataset.rows.iter().find(|r| r.id == c.id);
            let row = row.ok_or_else(|| ApiError::bad_request("unknown_row", format!("no row with id {:?}", c.id)))?;
            if c.included && !(row.x.is_finite() && row.y.is_finite() && row.y > 0.0) {
                return Err(ApiError::bad_request(
                    "unusable_row",
                    format!("row {:?} has no usable covariate/response and cannot be included", c.id),
                ));
            }
        }
        for c in &req.changes {
            entry.dataset.set_included(&c.id, c.included);
        }
        entry.revision += 1;
        dataset_summary(&id, entry)
    };
    state.persist()?;
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitRequest {
    dataset_id: String,
    revision: u64,
    hp: Option<HpInput>,
    #[serde(default)]
    options: OptionsInput,
}

async fn fit(State(state): State<AppState>, ApiJson(req): ApiJson<FitRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let hp = HpInput::resolve(req.hp)?;
    let opts = req.options.resolve();
    let (data, revision) = dataset_at(&state, &req.dataset_id, Some(req.revision))?;
    let (model, report) = state.compute(move || Ok(refcurve::fit_lms(&data, &hp, &opts)?)).await?;
    let label = state.store().datasets.get(&req.dataset_id).and_then(|e| e.label.clone());
    let body = json!({
        "dataset_id": req.dataset_id,
        "revision": revision,
        "gd": model.global_deviance,
        "edfs": { "M": model.m.edf, "S": model.s.edf, "L": model.l.edf },
        "total_edf": model.total_edf,
        "converged": model.converged,
        "iterations": model.iterations,
        "deviance_trace": report.deviance_trace,
        "warnings": report.warnings,
    });
    let entry = ModelEntry {
        document: ModelDocument::new(model, None, label),
        report,
        dataset_id: Some(req.dataset_id),
        revision: Some(revision),
    };
    let model_id = state.store_mut().insert_model(entry);
    state.persist()?;
    let mut body = body;
    body["model_id"] = json!(model_id);
    Ok((StatusCode::CREATED, Json(body)))
}

fn spawn_job<F>(state: &AppState, kind: &'static str, work: F) -> (StatusCode, Json<Value>)
where
    F: FnOnce(&Job) -> Result<Value, ApiError> + Send + 'static,
{
    let job = Arc::new(Job::new(kind));
    let id = state.register_job(job.clone());
    let st = state.clone();
    tokio::spawn(async move {
        let j = job.clone();
        let outcome = st
            .compute(move || {
                j.start();
                work(&j)
            })
            .await;
        job.finish(outcome);
    });
    (StatusCode::ACCEPTED, Json(json!({ "job_id": id, "kind": kind, "status": "queued" })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectRequest {
    dataset_id: String,
    revision: Option<u64>,
    ranges: Option<GridRanges>,
    /// One range for all three parameters.
    range: Option<DfRange>,
    #[serde(default)]
    options: OptionsInput,
}

async fn select(State(state): State<AppState>, ApiJson(req): ApiJson<SelectRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let ranges = match (req.ranges, req.range) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("invalid_argument", "give either ranges or range")),
        (Some(r), None) => r,
        (None, Some(r)) => GridRanges { m: r, s: r, l: r },
        (None, None) => GridRanges::default(),
    };
    for hp in ranges.cells()? {
        hp.validate()?;
    }
    let (data, revision) = dataset_at(&state, &req.dataset_id, req.revision)?;
    data.validate_for_fit()?;
    let opts = req.options.resolve();
    let dataset_id = req.dataset_id;
    Ok(spawn_job(&state, "select", move |job| {
        let result = selection::grid_search_bic_with_progress(&data, &ranges, &opts, |d, t| job.progress(d, t))?;
        let mut v = to_value(&result)?;
        v["dataset_id"] = json!(dataset_id);
        v["revision"] = json!(revision);
        Ok(v)
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CvRequest {
    dataset_id: String,
    revision: Option<u64>,
    hp: Option<HpInput>,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    options: OptionsInput,
}

fn default_folds() -> usize {
    10
}

fn default_seed() -> u64 {
    1
}

async fn cv(State(state): State<AppState>, ApiJson(req): ApiJson<CvRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let hp = HpInput::resolve(req.hp)?;
    let (data, revision) = dataset_at(&state, &req.dataset_id, req.revision)?;
    data.validate_for_fit()?;
    if req.folds < 2 || req.folds > data.n_included() {
        return Err(ApiError::bad_request(
            "invalid_argument",
            format!("folds must lie in [2, {}], got {}", data.n_included(), req.folds),
        ));
    }
    let opts = req.options.resolve();
    let dataset_id = req.dataset_id;
    Ok(spawn_job(&state, "cv", move |job| {
        job.progress(0, 1);
        let report = selection::cross_validate(&data, &hp, req.folds, req.seed, &opts)?;
        job.progress(1, 1);
        let mut v = to_value(&report)?;
        v["dataset_id"] = json!(dataset_id);
        v["revision"] = json!(revision);
        Ok(v)
    }))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let job = state.job(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(job.view(&id)))
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(to_value(&model(&state, &id)?.document)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurvesQuery {
    percentiles: Option<String>,
    grid: Option<usize>,
    from: Option<f64>,
    to: Option<f64>,
}

fn parse_levels(raw: Option<&str>) -> Result<Vec<f64>, ApiError> {
    let Some(raw) = raw.filter(|s| !s.trim().is_empty()) else {
        return Ok(refcurve::DEFAULT_PERCENTILES.to_vec());
    };
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ApiError::bad_request("invalid_query", format!("percentile {s:?} is not a number")))
        })
        .collect()
}

async fn get_curves(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<CurvesQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    let entry = model(&state, &id)?;
    let m = &entry.document.model;
    let levels = parse_levels(q.percentiles.as_deref())?;
    let n = q.grid.unwrap_or(analysis::DEFAULT_GRID_POINTS);
    let (lo, hi) = (q.from.unwrap_or(m.x_range.0), q.to.unwrap_or(m.x_range.1));
    if n == 0 || n > 100_000 || !(lo <= hi) {
        return Err(ApiError::bad_request("invalid_query", "grid must have 1..=100000 points and from <= to"));
    }
    let curves = refcurve::percentile_curves(m, &linspace(lo, hi, n), &levels)?;
    let mut v = to_value(&curves)?;
    v["model_id"] = json!(id);
    v["labels"] = json!(levels.iter().map(|&l| io::percentile_label(l)).collect::<Vec<_>>());
    Ok(Json(v))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutliersRequest {
    model_id: String,
    dataset_id: String,
    #[serde(default = "default_lower")]
    lower: f64,
    #[serde(default = "default_upper")]
    upper: f64,
}

fn default_lower() -> f64 {
    3.0
}

fn default_upper() -> f64 {
    97.0
}

async fn outliers(State(state): State<AppState>, ApiJson(req): ApiJson<OutliersRequest>) -> ApiResult {
    let entry = model(&state, &req.model_id)?;
    let (data, revision) = dataset_at(&state, &req.dataset_id, None)?;
    let flags = analysis::flag_outliers(&entry.document.model, &data, req.lower, req.upper)?;
    let mut v = to_value(&flags)?;
    v["n_flagged"] = json!(flags.n_flagged());
    v["revision"] = json!(revision);
    Ok(Json(v))
}

/// Row ids may be sent as strings or integers.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RowRef {
    Text(String),
    Number(u64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensitivityRequest {
    dataset_id: String,
    revision: Option<u64>,
    hp: Option<HpInput>,
    indices: Vec<RowRef>,
    dy_up: f64,
    dy_down: f64,
    #[serde(default = "default_percentile")]
    percentile: f64,
    #[serde(default)]
    options: OptionsInput,
}

fn default_percentile() -> f64 {
    50.0
}

async fn sensitivity(State(state): State<AppState>, ApiJson(req): ApiJson<SensitivityRequest>) -> ApiResult {
    let hp = HpInput::resolve(req.hp)?;
    let (data, revision) = dataset_at(&state, &req.dataset_id, req.revision)?;
    let row_ids = req
        .indices
        .into_iter()
        .map(|r| match r {
            RowRef::Text(s) => s,
            RowRef::Number(n) => n.to_string(),
        })
        .collect();
    let spec = SensitivitySpec { row_ids, dy_up: req.dy_up, dy_down: req.dy_down };
    let opts = req.options.resolve();
    let pct = req.percentile;
    let r = state.compute(move || Ok(analysis::sensitivity(&data, &spec, &hp, pct, &opts)?)).await?;
    Ok(Json(json!({
        "dataset_id": req.dataset_id,
        "revision": revision,
        "percentile": r.percentile,
        "x": r.x,
        "base_curve": r.base_curve,
        "up_curve": r.up_curve,
        "down_curve": r.down_curve,
        "delta_up": r.delta_up,
        "delta_down": r.delta_down,
        "delta_spread": r.delta_spread,
        "global_deviance": { "base": r.base.global_deviance, "up": r.up.global_deviance, "down": r.down.global_deviance },
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    a: String,
    b: String,
    #[serde(default = "default_percentile")]
    percentile: f64,
    grid: Option<usize>,
}

async fn compare(State(state): State<AppState>, ApiJson(req): ApiJson<CompareRequest>) -> ApiResult {
    let (a, b) = (model(&state, &req.a)?, model(&state, &req.b)?);
    let (ma, mb) = (&a.document.model, &b.document.model);
    let n = req.grid.unwrap_or(analysis::DEFAULT_GRID_POINTS);
    if n == 0 || n > 100_000 {
        return Err(ApiError::bad_request("invalid_argument", "grid must have 1..=100000 points"));
    }
    let (lo, hi) = (ma.x_range.0.max(mb.x_range.0), ma.x_range.1.min(mb.x_range.1));
    let grid = if lo <= hi {
        linspace(lo, hi, n)
    } else {
        linspace(ma.x_range.0.min(mb.x_range.0), ma.x_range.1.max(mb.x_range.1), n)
    };
    Ok(Json(to_value(&analysis::compare_models(ma, mb, req.percentile, &grid)?)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZscoreRequest {
    model_id: String,
    x: f64,
    y: f64,
}

async fn zscore(State(state): State<AppState>, ApiJson(req): ApiJson<ZscoreRequest>) -> ApiResult {
    let entry = model(&state, &req.model_id)?;
    let m = &entry.document.model;
    let z = refcurve::zscore(m, req.x, req.y)?;
    Ok(Json(json!({
        "z": z,
        "percentile": bccg::z_to_percentile(z),
        "extrapolated": m.is_extrapolated(req.x),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvertRequest {
    percentile: Option<f64>,
    zscore: Option<f64>,
}

async fn convert(ApiJson(req): ApiJson<ConvertRequest>) -> ApiResult {
    match (req.percentile, req.zscore) {
        (Some(p), None) => Ok(Json(json!({ "percentile": p, "zscore": bccg::percentile_to_z(p)? }))),
        (None, Some(z)) if z.is_finite() => Ok(Json(json!({ "zscore": z, "percentile": bccg::z_to_percentile(z) }))),
        (None, Some(_)) => Err(ApiError::bad_request("domain", "zscore must be finite")),
        _ => Err(ApiError::bad_request("invalid_argument", "give exactly one of percentile or zscore")),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    model_id: String,
    n: usize,
    #[serde(default)]
    mode: CovariateMode,
    #[serde(default = "default_seed")]
    seed: u64,
    label: Option<String>,
}

async fn simulate(State(state): State<AppState>, ApiJson(req): ApiJson<SimulateRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    if req.n == 0 || req.n > 1_000_000 {
        return Err(ApiError::bad_request("invalid_argument", "n must lie in [1, 1000000]"));
    }
    let entry = model(&state, &req.model_id)?;
    let (n, mode, seed) = (req.n, req.mode, req.seed);
    let data = state.compute(move || Ok(analysis::monte_carlo(&entry.document.model, n, mode, seed)?)).await?;
    let label = req.label.or_else(|| Some(format!("simulated from {} (seed {seed})", req.model_id)));
    let id = state.store_mut().insert_dataset(data, label);
    state.persist()?;
    Ok((StatusCode::CREATED, Json(json!({ "dataset_id": id, "revision": 0, "n": n }))))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReverseRequest {
    csv: String,
    smooth_df: Option<f64>,
}

async fn reverse(State(state): State<AppState>, ApiJson(req): ApiJson<ReverseRequest>) -> ApiResult {
    let chart = io::parse_chart_csv(req.csv.as_bytes())?;
    let smooth = req.smooth_df;
    let result = state.compute(move || Ok(analysis::reverse_lms(&chart, smooth)?)).await?;
    let mut v = to_value(&result)?;
    v["unconverged"] = json!(result.unconverged());
    Ok(Json(v))
}

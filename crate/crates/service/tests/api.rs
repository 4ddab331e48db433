use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use refcurve::analysis::{simulate_lms, ChartTable};
use refcurve::fitting::linspace;
use refcurve::{io, BccgParams, FitOptions, Hyperparameters};
use refcurve_service::{app, AppState, Config};
use serde_json::{json, Value};
use tower::ServiceExt;

fn config() -> Config {
    Config { origin: "http://ui.test".into(), workers: 2, ..Config::default() }
}

fn new_app() -> Router {
    let c = config();
    app(AppState::new(&c).unwrap(), &c)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn csv(n: usize, seed: u64) -> String {
    let truth = |x: f64| BccgParams::new(40.0 + 0.2 * x, 0.1, 0.0).unwrap();
    io::export_dataset_csv(&simulate_lms(truth, n, (0.0, 100.0), seed).unwrap())
}

async fn upload(app: &Router, n: usize, seed: u64) -> String {
    let (status, body) = call(app, Method::POST, "/datasets", Some(json!({ "csv": csv(n, seed), "x": "x", "y": "y" }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["dataset_id"].as_str().unwrap().to_string()
}

async fn fit(app: &Router, dataset: &str, revision: u64, hp: Value) -> (StatusCode, Value) {
    call(app, Method::POST, "/fit", Some(json!({ "dataset_id": dataset, "revision": revision, "hp": hp }))).await
}

async fn wait_for_job(app: &Router, job: &str) -> Value {
    for _ in 0..600 {
        let (status, v) = call(app, Method::GET, &format!("/jobs/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if v["status"] == "done" || v["status"] == "failed" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    panic!("job {job} did not finish");
}

#[tokio::test]
async fn convert_percentile_75() {
    let app = new_app();
    let (status, v) = call(&app, Method::POST, "/convert", Some(json!({ "percentile": 75 }))).await;
    assert_eq!(status, StatusCode::OK);
    let z = v["zscore"].as_f64().unwrap();
    assert!((z - 0.67449).abs() < 1e-4);
    assert_eq!(z, refcurve::bccg::percentile_to_z(75.0).unwrap());

    let (_, v) = call(&app, Method::POST, "/convert", Some(json!({ "zscore": z }))).await;
    assert!((v["percentile"].as_f64().unwrap() - 75.0).abs() < 1e-10);

    let (status, v) = call(&app, Method::POST, "/convert", Some(json!({ "percentile": 120 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "domain");
    let (status, _) = call(&app, Method::POST, "/convert", Some(json!({ "percentile": 5, "zscore": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stale_revision_is_rejected() {
    let app = new_app();
    let id = upload(&app, 120, 1).await;
    let (status, rows) = call(&app, Method::GET, &format!("/datasets/{id}/rows"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rows["revision"], 0);
    assert_eq!(rows["rows"].as_array().unwrap().len(), 120);

    let patch = json!({ "changes": [{ "id": "3", "included": false }, { "id": "7", "included": false }] });
    let (status, v) = call(&app, Method::PATCH, &format!("/datasets/{id}/rows"), Some(patch)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["revision"], 1);
    assert_eq!(v["n_included"], 118);

    let (status, v) = fit(&app, &id, 0, json!({ "m_df": 1, "s_df": 0, "l_df": 0 })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "stale_revision");
    assert_eq!(v["current_revision"], 1);

    let (status, v) = fit(&app, &id, 1, json!({ "m_df": 1, "s_df": 0, "l_df": 0 })).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["revision"], 1);

    let patch = json!({ "changes": [{ "id": "1", "included": false }], "revision": 0 });
    let (status, _) = call(&app, Method::PATCH, &format!("/datasets/{id}/rows"), Some(patch)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let patch = json!({ "changes": [{ "id": "no-such-row", "included": false }] });
    let (status, v) = call(&app, Method::PATCH, &format!("/datasets/{id}/rows"), Some(patch)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "unknown_row");
}

#[tokio::test]
async fn fits_are_identical_and_match_the_core() {
    let app = new_app();
    let id = upload(&app, 300, 2).await;
    let hp = json!({ "m": { "kind": "p_spline", "df_extra": 2.0 }, "s": { "kind": "p_spline", "df_extra": 1.0 }, "l": { "kind": "poly", "degree": 1 } });
    let (s1, a) = fit(&app, &id, 0, hp.clone()).await;
    let (s2, b) = fit(&app, &id, 0, hp).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_ne!(a["model_id"], b["model_id"]);
    assert_eq!(a["gd"], b["gd"]);
    assert_eq!(a["deviance_trace"], b["deviance_trace"]);
    let trace: Vec<f64> = a["deviance_trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));

    let (_, doc_a) = call(&app, Method::GET, &format!("/models/{}", a["model_id"].as_str().unwrap()), None).await;
    let (_, doc_b) = call(&app, Method::GET, &format!("/models/{}", b["model_id"].as_str().unwrap()), None).await;
    assert_eq!(doc_a, doc_b);
    assert_eq!(doc_a["format_version"], "1");

    let data = io::import_csv(csv(300, 2).as_bytes(), "x", "y").unwrap().dataset;
    let hp = Hyperparameters {
        m: refcurve::SmootherSpec::PSpline { df_extra: 2.0 },
        s: refcurve::SmootherSpec::PSpline { df_extra: 1.0 },
        l: refcurve::SmootherSpec::Poly { degree: 1 },
    };
    let (local, _) = refcurve::fit_lms(&data, &hp, &FitOptions::default()).unwrap();
    let wire: refcurve::FittedModel = serde_json::from_value(doc_a["model"].clone()).unwrap();
    assert_eq!(wire, local);
    assert_eq!(a["gd"].as_f64().unwrap().to_bits(), local.global_deviance.to_bits());
}

#[tokio::test]
async fn curves_zscore_outliers_and_compare() {
    let app = new_app();
    let id = upload(&app, 250, 3).await;
    let (_, a) = fit(&app, &id, 0, json!({ "m_df": 1, "s_df": 0, "l_df": 0 })).await;
    let (_, b) = fit(&app, &id, 0, json!({ "m_df": 3, "s_df": 1, "l_df": 0 })).await;
    let (ma, mb) = (a["model_id"].as_str().unwrap(), b["model_id"].as_str().unwrap());

    let (status, c) = call(&app, Method::GET, &format!("/models/{ma}/curves?percentiles=10,50,90&grid=25"), None).await;
    assert_eq!(status, StatusCode::OK, "{c}");
    assert_eq!(c["labels"], json!(["P10", "P50", "P90"]));
    assert_eq!(c["x"].as_array().unwrap().len(), 25);
    let values = c["values"].as_array().unwrap();
    for j in 0..25 {
        let col: Vec<f64> = values.iter().map(|row| row[j].as_f64().unwrap()).collect();
        assert!(col[0] <= col[1] && col[1] <= col[2]);
        assert_eq!(col[1], c["lms"][j]["m"].as_f64().unwrap());
    }
    let (status, c) = call(&app, Method::GET, &format!("/models/{ma}/curves"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(c["x"].as_array().unwrap().len(), 200);
    assert_eq!(c["levels"].as_array().unwrap().len(), 7);
    let (status, _) = call(&app, Method::GET, &format!("/models/{ma}/curves?grid=abc"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, z) = call(&app, Method::POST, "/zscore", Some(json!({ "model_id": ma, "x": 50.0, "y": 50.0 }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(z["extrapolated"], false);
    let zv = z["z"].as_f64().unwrap();
    assert!((z["percentile"].as_f64().unwrap() - refcurve::bccg::z_to_percentile(zv)).abs() < 1e-12);

    let (status, o) = call(&app, Method::POST, "/outliers", Some(json!({ "model_id": ma, "dataset_id": id, "lower": 10, "upper": 90 }))).await;
    assert_eq!(status, StatusCode::OK, "{o}");
    let flagged = o["rows"].as_array().unwrap().iter().filter(|r| r["flagged"] == true).count();
    assert_eq!(o["n_flagged"], flagged);
    assert!(flagged > 20 && flagged < 80);

    let (status, cmp) = call(&app, Method::POST, "/compare", Some(json!({ "a": ma, "b": mb, "percentile": 97, "grid": 40 }))).await;
    assert_eq!(status, StatusCode::OK);
    let deltas = cmp["delta"].as_array().unwrap();
    assert_eq!(deltas.len(), 40);
    let max = deltas.iter().map(|d| d.as_f64().unwrap().abs()).fold(0.0, f64::max);
    assert_eq!(cmp["max_abs_delta"].as_f64().unwrap(), max);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn selection_job_completes_with_ranked_records() {
    let app = new_app();
    let id = upload(&app, 150, 4).await;
    let body = json!({ "dataset_id": id, "range": { "lo": 0.0, "hi": 1.0, "step": 1.0 } });
    let (status, v) = call(&app, Method::POST, "/select", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = v["job_id"].as_str().unwrap().to_string();
    let done = wait_for_job(&app, &job).await;
    assert_eq!(done["status"], "done", "{done}");
    assert_eq!(done["progress"], 1.0);
    let records = done["result"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 8);
    let bics: Vec<f64> = records.iter().map(|r| r["bic"].as_f64().unwrap()).collect();
    assert!(bics.windows(2).all(|w| w[0] <= w[1]));
    let (_, again) = call(&app, Method::GET, &format!("/jobs/{job}"), None).await;
    assert_eq!(again, done);

    let bad = json!({ "dataset_id": id, "range": { "lo": 3.0, "hi": 1.0, "step": 1.0 } });
    let (status, _) = call(&app, Method::POST, "/select", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cv_job_reports_folds() {
    let app = new_app();
    let id = upload(&app, 120, 5).await;
    let body = json!({ "dataset_id": id, "hp": { "m_df": 1, "s_df": 0, "l_df": 0 }, "folds": 4, "seed": 9 });
    let (status, v) = call(&app, Method::POST, "/cv", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let done = wait_for_job(&app, v["job_id"].as_str().unwrap()).await;
    assert_eq!(done["status"], "done", "{done}");
    assert_eq!(done["result"]["fold_deviances"].as_array().unwrap().len(), 4);
    assert_eq!(done["result"]["seed"], 9);

    let body = json!({ "dataset_id": id, "folds": 1 });
    let (status, _) = call(&app, Method::POST, "/cv", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn simulate_sensitivity_and_reverse() {
    let app = new_app();
    let id = upload(&app, 200, 6).await;
    let (_, f) = fit(&app, &id, 0, json!({ "m_df": 1, "s_df": 0, "l_df": 0 })).await;
    let model = f["model_id"].as_str().unwrap();

    let (status, s) = call(&app, Method::POST, "/simulate", Some(json!({ "model_id": model, "n": 90, "mode": "uniform", "seed": 3 }))).await;
    assert_eq!(status, StatusCode::CREATED, "{s}");
    let sim_id = s["dataset_id"].as_str().unwrap();
    assert_ne!(sim_id, id);
    let (_, rows) = call(&app, Method::GET, &format!("/datasets/{sim_id}/rows"), None).await;
    assert_eq!(rows["n"], 90);

    let body = json!({ "dataset_id": id, "hp": { "m_df": 1, "s_df": 0, "l_df": 0 }, "indices": [1, "2", 3], "dy_up": 5.0, "dy_down": 5.0, "percentile": 50 });
    let (status, r) = call(&app, Method::POST, "/sensitivity", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    let n = r["x"].as_array().unwrap().len();
    assert_eq!(r["delta_up"].as_array().unwrap().len(), n);
    let up: f64 = r["delta_up"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!(up > 0.0);

    let xs = linspace(1.0, 10.0, 10);
    let chart = ChartTable::from_lms(&xs, &refcurve::DEFAULT_PERCENTILES, |x| BccgParams::new(70.0 + 5.0 * x, 0.06, -0.5).unwrap()).unwrap();
    let (status, rev) = call(&app, Method::POST, "/reverse", Some(json!({ "csv": io::export_chart_csv(&chart) }))).await;
    assert_eq!(status, StatusCode::OK, "{rev}");
    let points = rev["points"].as_array().unwrap();
    assert_eq!(points.len(), 10);
    for p in points {
        assert!((p["params"]["l"].as_f64().unwrap() + 0.5).abs() < 1e-3);
    }
    assert_eq!(rev["unconverged"], json!([]));
}

#[tokio::test]
async fn error_statuses() {
    let app = new_app();
    let (status, v) = call(&app, Method::GET, "/models/m99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");
    let (status, _) = call(&app, Method::GET, "/jobs/j42", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, v) = call(&app, Method::POST, "/fit", Some(json!({ "dataset_id": "d1" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_json");

    let (status, v) = call(&app, Method::POST, "/datasets", Some(json!({ "csv": "a,b\n1,2\n", "x": "x", "y": "b" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "import");

    let id = upload(&app, 10, 7).await;
    let (status, v) = fit(&app, &id, 0, json!({ "m_df": 1, "s_df": 0, "l_df": 0 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "dataset");

    let id = upload(&app, 60, 8).await;
    let (status, v) = fit(&app, &id, 0, json!({ "m_df": 40, "s_df": 0, "l_df": 0 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
}

#[tokio::test]
async fn cors_allows_the_configured_origin() {
    let app = new_app();
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/fit")
        .header(header::ORIGIN, "http://ui.test")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.test");
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/fit")
        .header(header::ORIGIN, "http://elsewhere.test")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let allowed = resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN);
    assert_ne!(allowed.map(|v| v.to_str().unwrap()), Some("http://elsewhere.test"));
}

#[tokio::test]
async fn snapshot_restores_the_session() {
    let dir = tempfile::tempdir().unwrap();
    let c = Config { snapshot: Some(dir.path().join("session.json")), ..config() };
    let first = app(AppState::new(&c).unwrap(), &c);
    let id = upload(&first, 100, 9).await;
    let (_, f) = fit(&first, &id, 0, json!({ "m_df": 0, "s_df": 0, "l_df": 0 })).await;
    let (_, doc) = call(&first, Method::GET, &format!("/models/{}", f["model_id"].as_str().unwrap()), None).await;

    let second = app(AppState::new(&c).unwrap(), &c);
    let (status, rows) = call(&second, Method::GET, &format!("/datasets/{id}/rows"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rows["n"], 100);
    let (_, again) = call(&second, Method::GET, &format!("/models/{}", f["model_id"].as_str().unwrap()), None).await;
    assert_eq!(again, doc);
    let new_id = upload(&second, 50, 10).await;
    assert_ne!(new_id, id);
}

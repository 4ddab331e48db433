//! HTTP/JSON API over the reference-curve engine: datasets with versioned
//! include flags, fits, selection and cross-validation jobs, analysis tools
//! and calculators.

mod config;
mod error;
mod jobs;
mod routes;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::http::{header, HeaderValue, Method};
use axum::Router;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use config::Config;
pub use error::ApiError;
use jobs::Job;
use store::SessionStore;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: RwLock<SessionStore>,
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    next_job: AtomicU64,
    workers: Arc<Semaphore>,
    snapshot: Option<PathBuf>,
}

impl AppState {
    /// Loads the snapshot named in `config` when that file exists.
    pub fn new(config: &Config) -> Result<AppState, String> {
        let store = match &config.snapshot {
            Some(path) if path.exists() => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            _ => SessionStore::default(),
        };
        Ok(AppState {
            inner: Arc::new(Inner {
                store: RwLock::new(store),
                jobs: RwLock::new(HashMap::new()),
                next_job: AtomicU64::new(0),
                workers: Arc::new(Semaphore::new(config.workers)),
                snapshot: config.snapshot.clone(),
            }),
        })
    }

    fn store(&self) -> RwLockReadGuard<'_, SessionStore> {
        self.inner.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn store_mut(&self) -> RwLockWriteGuard<'_, SessionStore> {
        self.inner.store.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Rewrites the snapshot file, if one is configured.
    fn persist(&self) -> Result<(), ApiError> {
        let Some(path) = &self.inner.snapshot else {
            return Ok(());
        };
        let text = serde_json::to_string(&*self.store()).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| ApiError::internal(format!("snapshot {}: {e}", path.display())))
    }

    fn register_job(&self, job: Arc<Job>) -> String {
        let id = format!("j{}", self.inner.next_job.fetch_add(1, Ordering::Relaxed) + 1);
        self.inner.jobs.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), job);
        id
    }

    fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.inner.jobs.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    /// Runs blocking numerical work on the bounded worker pool.
    async fn compute<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    {
        let _permit = self.inner.workers.clone().acquire_owned().await.map_err(|e| ApiError::internal(e.to_string()))?;
        tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
    }
}

pub fn cors(origin: &str) -> CorsLayer {
    let allow = if origin == "*" {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::exact(HeaderValue::from_str(origin).unwrap_or(HeaderValue::from_static("null")))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::PATCH, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn app(state: AppState, config: &Config) -> Router {
    routes::router().with_state(state).layer(cors(&config.origin))
}

use std::path::PathBuf;

use serde::Deserialize;

/// Server settings: an optional JSON file (`REFCURVE_CONFIG`) overridden by
/// `REFCURVE_HOST`, `REFCURVE_PORT`, `REFCURVE_ORIGIN`, `REFCURVE_SNAPSHOT`
/// and `REFCURVE_WORKERS`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    pub port: u16,
    /// Allowed CORS origin; `*` allows any.
    pub origin: String,
    /// Session snapshot file, loaded at startup and rewritten after each change.
    pub snapshot: Option<PathBuf>,
    /// Concurrent compute tasks (fits, selection and CV jobs).
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            host: "127.0.0.1".into(),
            port: 8080,
            origin: "http://localhost:5173".into(),
            snapshot: None,
            workers: std::thread::available_parallelism().map_or(2, |n| n.get()),
        }
    }
}

impl Config {
    pub fn from_env() -> Result<Config, String> {
        Self::from_sources(|k| std::env::var(k).ok(), |p| std::fs::read_to_string(p).map_err(|e| format!("{p}: {e}")))
    }

    pub fn from_sources(
        env: impl Fn(&str) -> Option<String>,
        read_file: impl Fn(&str) -> Result<String, String>,
    ) -> Result<Config, String> {
        let mut config = match env("REFCURVE_CONFIG") {
            Some(path) => serde_json::from_str(&read_file(&path)?).map_err(|e| format!("{path}: {e}"))?,
            None => Config::default(),
        };
        if let Some(host) = env("REFCURVE_HOST") {
            config.host = host;
        }
        if let Some(port) = env("REFCURVE_PORT") {
            config.port = port.trim().parse().map_err(|_| format!("REFCURVE_PORT is not a port number: {port:?}"))?;
        }
        if let Some(origin) = env("REFCURVE_ORIGIN") {
            config.origin = origin;
        }
        if let Some(path) = env("REFCURVE_SNAPSHOT") {
            config.snapshot = Some(PathBuf::from(path));
        }
        if let Some(w) = env("REFCURVE_WORKERS") {
            config.workers = w
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("REFCURVE_WORKERS must be a positive integer, got {w:?}"))?;
        }
        if config.workers == 0 {
            return Err("workers must be positive".into());
        }
        Ok(config)
    }
}

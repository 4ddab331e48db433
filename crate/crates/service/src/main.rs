use refcurve_service::{app, AppState, Config};

#[tokio::main]
async fn main() {
    let config = Config::from_env().unwrap_or_else(|e| {
        eprintln!("configuration error: {e}");
        std::process::exit(2);
    });
    let state = AppState::new(&config).unwrap_or_else(|e| {
        eprintln!("snapshot error: {e}");
        std::process::exit(2);
    });
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.unwrap_or_else(|e| {
        eprintln!("cannot bind {addr}: {e}");
        std::process::exit(2);
    });
    eprintln!("refcurve-service listening on http://{addr} (CORS origin {})", config.origin);
    axum::serve(listener, app(state, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .unwrap_or_else(|e| eprintln!("server error: {e}"));
}

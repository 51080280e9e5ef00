//! Annotation backend: serves capacity-bounded initial clusters to
//! annotators, records confirm/divide rounds in an append-only log, and
//! exports per-annotator edge sets.
//!
//! The log is the source of truth. A round is acknowledged only after its
//! record has been appended and synced, and starting a server on an existing
//! log replays it to the same session states.

pub mod config;
pub mod error;
pub mod log;
pub mod routes;
pub mod store;

use std::sync::{Arc, Mutex};

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use routes::router;
pub use store::AnnotationStore;

pub type SharedStore = Arc<Mutex<AnnotationStore>>;

/// Opens the store described by `config`, replaying any existing log.
pub fn open_store(config: &ServiceConfig) -> Result<SharedStore, ServiceError> {
    Ok(Arc::new(Mutex::new(AnnotationStore::open(config)?)))
}

/// Binds `config.bind` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let store = open_store(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| ServiceError::Startup(format!("bind {}: {e}", config.bind)))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Startup(e.to_string()))?;
    tracing::info!(%addr, "annotation service listening");
    eprintln!("listening: http://{addr}");
    serve_on(listener, store).await
}

/// Serves `store` on an already-bound listener until ctrl-c.
pub async fn serve_on(listener: tokio::net::TcpListener, store: SharedStore) -> Result<(), ServiceError> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Startup(e.to_string()))
}

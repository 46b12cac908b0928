//! HTTP/JSON gateway over the credential ledger engine.

pub mod api;
pub mod config;

use std::sync::Arc;
use std::time::Duration;

use credledger::{BlockProducer, Clock, Engine, EngineError, SystemClock};

pub use api::{router, ApiError, AppState, ErrorBody};
pub use config::{ConfigError, ConfigOverrides, GatewayConfig};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens (or creates) the engine described by `config` on the system clock.
pub fn open_engine(config: &GatewayConfig) -> Result<Arc<Engine>, EngineError> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
    Ok(Arc::new(Engine::open(clock, config.engine_config())?))
}

/// Runs the gateway with a background block producer until `shutdown` resolves.
pub async fn serve(
    config: GatewayConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let engine = open_engine(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    log::info!(
        "listening on {} (block interval {} ms, state {:?})",
        listener.local_addr()?,
        config.block_interval_ms,
        config.state_path()
    );
    let producer = BlockProducer::spawn(engine.clone(), Duration::from_millis(config.block_interval_ms.max(1)));
    let app = router(engine.clone(), config.cors_origin.as_deref());
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    producer.stop();
    if let Some(path) = config.state_path() {
        engine.save(path)?;
    }
    Ok(result?)
}

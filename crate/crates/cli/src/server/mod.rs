//! HTTP session service.
//!
//! Routes:
//!
//! ```text
//! POST /sessions                          new session (201)
//! GET  /sessions                          list
//! GET  /sessions/{id}                     state
//! POST /sessions/{id}/calibration         {category, action: up|down|accept}
//! POST /sessions/{id}/predict             {grouping, reference, mode, accept}
//! POST /sessions/{id}/play                run a stimulation on the virtual device
//! POST /sessions/{id}/trials/{k}/rating   {rating}
//! GET  /sessions/{id}/summary             naturalness statistics
//! GET  /signals/preview?category&level    downsampled waveform (<= 3000 points)
//! GET  /profiles                          energy profiles
//! GET  /events                            server-sent events
//! ```

pub mod api;
pub mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use stimkit_core::device::DacLut;
use stimkit_core::signalgen::MIN_SAMPLE_RATE_HZ;
use stimkit_core::study::Phase;
use stimkit_core::{AmplitudeLadder, ProfileSet};
use tokio::sync::broadcast;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::args::ServeArgs;
use crate::commands::load_lut;
use crate::error::{CliError, CliResult};
use store::SessionStore;

/// Notification pushed to `/events` subscribers.
#[derive(Debug, Clone, Serialize)]
pub struct ServerEvent {
    pub kind: &'static str,
    pub session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<u32>,
}

impl ServerEvent {
    pub fn session_updated(id: &str, phase: Phase) -> Self {
        Self { kind: "session_updated", session_id: id.to_string(), phase: Some(phase), trial: None }
    }

    pub fn stimulation(id: &str, kind: &'static str, trial: Option<u32>) -> Self {
        Self { kind, session_id: id.to_string(), phase: None, trial }
    }
}

pub struct AppState {
    pub store: SessionStore,
    pub profiles: ProfileSet,
    pub ladder: AmplitudeLadder,
    pub lut: DacLut,
    pub sample_rate_hz: u32,
    pub events: broadcast::Sender<ServerEvent>,
}

impl AppState {
    pub fn new(store: SessionStore, lut: DacLut, sample_rate_hz: u32) -> Self {
        let ladder = AmplitudeLadder::standard();
        let profiles = ProfileSet::build(&ladder).expect("standard ladder is valid");
        let (events, _) = broadcast::channel(256);
        Self { store, profiles, ladder, lut, sample_rate_hz, events }
    }

    pub fn notify(&self, event: ServerEvent) {
        // no subscribers is fine
        let _ = self.events.send(event);
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub lut: DacLut,
    pub sample_rate_hz: u32,
    pub cors: Vec<String>,
}

impl ServiceConfig {
    pub fn from_args(args: &ServeArgs) -> CliResult<Self> {
        if args.sample_rate < MIN_SAMPLE_RATE_HZ {
            return Err(CliError::Validation(format!(
                "sample rate {} Hz below {MIN_SAMPLE_RATE_HZ} Hz",
                args.sample_rate
            )));
        }
        Ok(Self {
            data_dir: args.data_dir.clone(),
            lut: load_lut(args.lut.as_deref())?,
            sample_rate_hz: args.sample_rate,
            cors: args.cors.clone(),
        })
    }
}

pub fn router(state: Arc<AppState>, cors: &[String]) -> Router {
    let app = Router::new()
        .route("/health", get(api::health))
        .route("/sessions", post(api::create_session).get(api::list_sessions))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/calibration", post(api::calibration_step))
        .route("/sessions/{id}/predict", post(api::predict))
        .route("/sessions/{id}/play", post(api::play))
        .route("/sessions/{id}/trials/{k}/rating", post(api::rate_trial))
        .route("/sessions/{id}/summary", get(api::session_summary))
        .route("/signals/preview", get(api::preview))
        .route("/profiles", get(api::profiles))
        .route("/events", get(api::events))
        .with_state(state);
    if cors.is_empty() {
        return app;
    }
    let origin = if cors.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(cors.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    app.layer(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([axum::http::header::CONTENT_TYPE]),
    )
}

/// Builds the application state, loading any sessions already on disk.
pub async fn build_app(config: &ServiceConfig) -> CliResult<Router> {
    let store = SessionStore::open(&config.data_dir)
        .await
        .map_err(|e| CliError::State(format!("data directory {}: {e}", config.data_dir.display())))?;
    let state = Arc::new(AppState::new(store, config.lut.clone(), config.sample_rate_hz));
    Ok(router(state, &config.cors))
}

pub async fn serve(args: &ServeArgs) -> CliResult<()> {
    let config = ServiceConfig::from_args(args)?;
    let app = build_app(&config).await?;
    let listener = tokio::net::TcpListener::bind(args.listen)
        .await
        .map_err(|e| CliError::State(format!("cannot listen on {}: {e}", args.listen)))?;
    tracing::info!(addr = %args.listen, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub fn serve_blocking(args: &ServeArgs) -> CliResult<()> {
    tokio::runtime::Runtime::new()?.block_on(serve(args))
}

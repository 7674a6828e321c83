//! Read-only HTTP front end for a results file.
//!
//! Endpoints:
//! - `GET /api/results`: the results file in canonical form
//! - `GET /api/export?format=csv|latex|json|html[&metrics=bleu,chrf]`: an exported table
//! - `GET /`: the embedded dashboard

use std::collections::HashMap;
use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{middleware, Json, Router};
use log::info;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

use sysrank::metrics::MetricId;
use sysrank::results::{export_table, read_results, ExportFormat, ResultsError, ResultsFile};

const INDEX_HTML: &str = include_str!("../assets/index.html");

pub const DEFAULT_PORT: u16 = 8501;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub results_path: PathBuf,
    pub port: u16,
    pub bind_address: IpAddr,
}

impl ServerConfig {
    pub fn new(results_path: impl Into<PathBuf>) -> Self {
        ServerConfig {
            results_path: results_path.into(),
            port: DEFAULT_PORT,
            bind_address: IpAddr::V4(Ipv4Addr::LOCALHOST),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

struct AppState {
    results: ResultsFile,
    canonical: Vec<u8>,
}

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn get_results(State(state): State<Arc<AppState>>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        state.canonical.clone(),
    )
        .into_response()
}

async fn get_export(
    State(state): State<Arc<AppState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let Some(raw) = params.get("format") else {
        return error_response(StatusCode::BAD_REQUEST, "missing format parameter".into());
    };
    let format: ExportFormat = match raw.parse() {
        Ok(f) => f,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let mut metrics = Vec::new();
    if let Some(list) = params.get("metrics").filter(|l| !l.is_empty()) {
        for name in list.split(',') {
            match name.trim().parse::<MetricId>() {
                Ok(m) => metrics.push(m),
                Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
            }
        }
    }
    match export_table(&state.results, format, &metrics) {
        Ok(body) => {
            let disposition = format!("inline; filename=\"results.{}\"", format.extension());
            (
                [
                    (header::CONTENT_TYPE, format.content_type().to_string()),
                    (header::CONTENT_DISPOSITION, disposition),
                ],
                body,
            )
                .into_response()
        }
        Err(e) => error_response(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn index() -> Response {
    ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], INDEX_HTML).into_response()
}

async fn not_found() -> Response {
    error_response(StatusCode::NOT_FOUND, "not found".into())
}

async fn add_headers(mut response: Response) -> Response {
    let h = response.headers_mut();
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    h.insert(
        "cross-origin-resource-policy",
        HeaderValue::from_static("same-origin"),
    );
    h.insert(
        header::X_CONTENT_TYPE_OPTIONS,
        HeaderValue::from_static("nosniff"),
    );
    response
}

/// Router over an immutable snapshot of `results`.
pub fn router(results: ResultsFile) -> Result<Router, ServerError> {
    let canonical = results.to_canonical_bytes()?;
    let state = Arc::new(AppState { results, canonical });
    Ok(Router::new()
        .route("/", get(index))
        .route("/index.html", get(index))
        .route("/api/results", get(get_results))
        .route("/api/export", get(get_export))
        .fallback(not_found)
        .with_state(state)
        .layer(middleware::map_response(add_headers)))
}

/// Loads the results file and binds the listening socket.
pub async fn bind(config: &ServerConfig) -> Result<(TcpListener, Router), ServerError> {
    let results = read_results(&config.results_path)?;
    let app = router(results)?;
    let addr = SocketAddr::new(config.bind_address, config.port);
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })?;
    Ok((listener, app))
}

pub async fn serve_until(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Serves until Ctrl-C.
pub async fn serve(config: ServerConfig) -> Result<(), ServerError> {
    let (listener, app) = bind(&config).await?;
    serve_until(listener, app, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

//! HTTP API: upload a dataset, configure and run audits, fetch reports and
//! the fairness tree.
//!
//! | Method | Path                          | Purpose                          |
//! |--------|-------------------------------|----------------------------------|
//! | POST   | `/v1/datasets`                | multipart upload (`file`, `schema`) |
//! | GET    | `/v1/datasets/{id}`           | dataset metadata and diagnostics |
//! | POST   | `/v1/datasets/{id}/audits`    | run an audit, returns the report |
//! | GET    | `/v1/datasets/{id}/audits`    | report history, oldest first     |
//! | GET    | `/v1/fairness-tree`           | tree definition (ETag cached)    |
//!
//! Raw rows are never echoed back; responses carry aggregates only.

mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use parityd_core::report::DatasetFingerprint;
use parityd_core::{
    parse_csv, run_audit, tree, validate_with, AuditConfig, AuditReport, DatasetSchema,
    Diagnostic, ParseOptions, ValidationOptions,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use error::{ApiError, ErrorBody};
pub use store::{Session, Store};

pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024 * 1024;
pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: String,
    pub ttl: Duration,
    pub max_body_bytes: usize,
    pub persist_dir: Option<PathBuf>,
    /// Allowed console origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            addr: DEFAULT_ADDR.to_string(),
            ttl: DEFAULT_TTL,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            persist_dir: None,
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `PARITYD_ADDR`, `PARITYD_TTL_HOURS`,
    /// `PARITYD_MAX_BODY_BYTES`, `PARITYD_PERSIST_DIR` and `PARITYD_CORS_ORIGIN`.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = ServiceConfig::default();
        if let Ok(addr) = std::env::var("PARITYD_ADDR") {
            cfg.addr = addr;
        }
        if let Ok(hours) = std::env::var("PARITYD_TTL_HOURS") {
            let hours: f64 = hours
                .parse()
                .map_err(|_| format!("PARITYD_TTL_HOURS must be a number, got {hours:?}"))?;
            cfg.ttl = Duration::try_from_secs_f64(hours * 3600.0)
                .map_err(|_| format!("PARITYD_TTL_HOURS out of range: {hours}"))?;
        }
        if let Ok(bytes) = std::env::var("PARITYD_MAX_BODY_BYTES") {
            cfg.max_body_bytes = bytes
                .parse()
                .map_err(|_| format!("PARITYD_MAX_BODY_BYTES must be an integer, got {bytes:?}"))?;
        }
        if let Ok(dir) = std::env::var("PARITYD_PERSIST_DIR") {
            cfg.persist_dir = Some(PathBuf::from(dir));
        }
        if let Ok(origin) = std::env::var("PARITYD_CORS_ORIGIN") {
            cfg.cors_origin = Some(origin);
        }
        Ok(cfg)
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let store = Store::new(config.ttl, config.persist_dir.clone());
        Arc::new(AppState { config, store })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match &state.config.cors_origin {
        Some(o) => HeaderValue::from_str(o)
            .map(AllowOrigin::exact)
            .unwrap_or_else(|_| AllowOrigin::any()),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::IF_NONE_MATCH])
        .expose_headers([header::ETAG]);
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/v1/datasets", axum::routing::post(upload_dataset))
        .route("/v1/datasets/{id}", get(dataset_info))
        .route("/v1/datasets/{id}/audits", get(audit_history).post(create_audit))
        .route("/v1/fairness-tree", get(fairness_tree))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

/// Binds, starts the eviction sweep and serves until the process exits.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let addr: SocketAddr = config
        .addr
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{e}")))?;
    let state = AppState::new(config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let evicted = sweeper.store.evict_expired(SystemTime::now());
            if evicted > 0 {
                tracing::info!(evicted, "evicted expired sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}

/// JSON `schema` part of an upload.
#[derive(Debug, Deserialize)]
pub struct UploadSpec {
    #[serde(flatten)]
    pub schema: DatasetSchema,
    #[serde(default)]
    pub options: ParseOptions,
    #[serde(default)]
    pub validation: ValidationOptions,
}

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub row_count: u64,
    pub content_hash: String,
    pub schema: DatasetSchema,
    pub diagnostics: Vec<Diagnostic>,
    pub created_at: u64,
    pub expires_at: u64,
}

impl DatasetInfo {
    fn of(session: &Session) -> Self {
        let fp = DatasetFingerprint::of(&session.dataset);
        DatasetInfo {
            dataset_id: session.id.clone(),
            row_count: fp.row_count,
            content_hash: fp.content_hash,
            schema: session.dataset.schema().clone(),
            diagnostics: session.diagnostics.clone(),
            created_at: store::unix_seconds(session.created_at),
            expires_at: store::unix_seconds(session.expires_at),
        }
    }
}

fn multipart_error(err: axum::extract::multipart::MultipartError, limit: usize) -> ApiError {
    if err.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large(limit)
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, "BadMultipart", err.body_text())
    }
}

async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> Result<Response, ApiError> {
    let limit = state.config.max_body_bytes;
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok());
    if declared.is_some_and(|n| n > limit) {
        return Err(ApiError::too_large(limit));
    }

    let mut file: Option<Bytes> = None;
    let mut spec: Option<Bytes> = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| multipart_error(e, limit))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| multipart_error(e, limit))?;
        match name.as_str() {
            "file" => file = Some(data),
            "schema" => spec = Some(data),
            _ => {}
        }
    }
    let file = file.ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "MissingPart", "multipart part \"file\" is required")
    })?;
    let spec = spec.ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "MissingPart", "multipart part \"schema\" is required")
    })?;
    let spec: UploadSpec = serde_json::from_slice(&spec).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidSchema", format!("schema part: {e}"))
    })?;

    let (dataset, diagnostics) = tokio::task::spawn_blocking(move || {
        let dataset = parse_csv(&file, &spec.schema, &spec.options)?;
        let diagnostics = validate_with(&dataset, &spec.validation);
        Ok::<_, ApiError>((dataset, diagnostics))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;

    let session = state.store.insert(dataset, diagnostics);
    Ok((StatusCode::CREATED, Json(DatasetInfo::of(&session))).into_response())
}

fn session(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::not_found("dataset", id))
}

async fn dataset_info(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<DatasetInfo>, ApiError> {
    let session = session(&state, &id)?;
    Ok(Json(DatasetInfo::of(&session)))
}

fn json_bytes(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn create_audit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = session(&state, &id)?;
    let config: AuditConfig = serde_json::from_slice(&body).map_err(|e| {
        let (status, code) = if e.is_data() {
            (StatusCode::UNPROCESSABLE_ENTITY, "InvalidConfig")
        } else {
            (StatusCode::BAD_REQUEST, "MalformedJson")
        };
        ApiError::new(status, code, e.to_string())
    })?;
    let dataset = session.dataset.clone();
    let report = tokio::task::spawn_blocking(move || {
        run_audit(&dataset, &config).map(|res| AuditReport::new(&dataset, &res, None))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;

    let json = report.to_json();
    let seq = session.push_report(report);
    if let Err(e) = state.store.persist(&session, seq, &json) {
        tracing::warn!(error = %e, dataset = %session.id, "could not persist report");
    }
    Ok(json_bytes(StatusCode::OK, json))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditHistory {
    pub dataset_id: String,
    pub reports: Vec<AuditReport>,
}

async fn audit_history(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = session(&state, &id)?;
    let history = AuditHistory {
        dataset_id: session.id.clone(),
        reports: session.reports(),
    };
    let mut body = serde_json::to_vec_pretty(&history).expect("history serializes");
    body.push(b'\n');
    Ok(json_bytes(StatusCode::OK, body))
}

/// Strong ETag for the bundled tree: version plus a content digest.
pub fn tree_etag() -> String {
    let digest = Sha256::digest(tree::builtin_json().as_bytes());
    format!("\"tree-v{}-{}\"", tree::builtin().version(), &hex::encode(digest)[..16])
}

async fn fairness_tree(headers: HeaderMap) -> Response {
    let etag = tree_etag();
    let cache = [
        (header::ETAG, etag.clone()),
        (header::CACHE_CONTROL, "public, max-age=3600".to_string()),
    ];
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return (StatusCode::NOT_MODIFIED, cache).into_response();
    }
    (
        StatusCode::OK,
        cache,
        [(header::CONTENT_TYPE, "application/json".to_string())],
        tree::builtin_json(),
    )
        .into_response()
}

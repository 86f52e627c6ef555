use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use parityd_core::{AuditError, IngestError};
use serde::Serialize;
use serde_json::Value;

/// Structured error body: `{code, message, detail}`.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} {id:?} not found"))
    }

    pub fn too_large(limit: usize) -> Self {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "PayloadTooLarge",
            format!("request body exceeds {limit} bytes"),
        )
        .with_detail(serde_json::json!({ "limit_bytes": limit }))
    }
}

impl From<IngestError> for ApiError {
    fn from(err: IngestError) -> Self {
        let detail = match &err {
            IngestError::MissingColumn(name) => serde_json::json!({ "column": name }),
            IngestError::BadLabelValue { row, cell }
            | IngestError::BadDecisionValue { row, cell }
            | IngestError::BadScoreValue { row, cell } => {
                serde_json::json!({ "row": row, "cell": cell })
            }
            IngestError::DuplicateEntityId(id) => serde_json::json!({ "entity_id": id }),
            IngestError::TooManyGroups {
                column,
                distinct,
                cap,
            } => serde_json::json!({ "column": column, "distinct": distinct, "cap": cap }),
            _ => Value::Null,
        };
        ApiError::new(StatusCode::BAD_REQUEST, err.code(), err.to_string()).with_detail(detail)
    }
}

impl From<AuditError> for ApiError {
    fn from(err: AuditError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, err.code(), err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

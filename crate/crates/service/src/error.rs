//! API error envelope.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use oversight_core::engine::{EngineError, ERROR_CODES};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::store::StoreError;

/// Codes raised by the service layer itself, on top of [`ERROR_CODES`].
pub const SERVICE_ERROR_CODES: &[&str] = &[
    "UNAUTHORIZED",
    "FORBIDDEN",
    "BAD_REQUEST",
    "NOT_FOUND",
    "IDEMPOTENCY_KEY_REUSED",
    "STORE_IO",
    "STORE_CORRUPT",
    "INTERNAL",
];

pub fn is_documented(code: &str) -> bool {
    ERROR_CODES.contains(&code) || SERVICE_ERROR_CODES.contains(&code)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn unauthorized() -> Self {
        Self::new("UNAUTHORIZED", "missing or unknown bearer token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new("FORBIDDEN", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("BAD_REQUEST", message)
    }

    pub fn status(&self) -> StatusCode {
        match self.code.as_str() {
            "UNAUTHORIZED" => StatusCode::UNAUTHORIZED,
            "BAD_REQUEST" => StatusCode::BAD_REQUEST,
            "FORBIDDEN" | "ROLE_MISMATCH" | "UNAUTHORIZED_ACTOR" => StatusCode::FORBIDDEN,
            "NOT_FOUND" | "UNKNOWN_SOURCE" | "UNKNOWN_ARTIFACT" | "UNKNOWN_PROFILE" | "UNKNOWN_TASK"
            | "UNKNOWN_VERSION" | "UNKNOWN_RULE" | "UNKNOWN_TARGET" => StatusCode::NOT_FOUND,
            "STALE_TASK" | "CLAIM_CONFLICT" | "DUPLICATE_ID_CONFLICT" | "IDEMPOTENCY_KEY_REUSED" => StatusCode::CONFLICT,
            "GENERATOR_UNAVAILABLE" => StatusCode::BAD_GATEWAY,
            "STORE_IO" | "STORE_CORRUPT" | "INTERNAL" | "BROKEN_CHAIN" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = match e.code() {
            "STALE_TASK" => "task already resolved by another reviewer".to_string(),
            _ => e.to_string(),
        };
        let detail = match &e {
            EngineError::Review(oversight_core::review::ReviewError::UnknownNode(ids))
            | EngineError::Review(oversight_core::review::ReviewError::UnresolvedRequirement(ids))
            | EngineError::Governance(oversight_core::governance::GovernanceError::UnresolvedJustification(ids)) => {
                Some(serde_json::json!({ "ids": ids }))
            }
            EngineError::Generation(oversight_core::generation::GenerationError::SchemaViolation(v)) => {
                Some(serde_json::json!({ "violations": v }))
            }
            _ => None,
        };
        ApiError {
            code: e.code().to_string(),
            message,
            detail,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => Self::new("STORE_IO", "store read or write failed"),
            StoreError::Chain { file, report } => Self::new("STORE_CORRUPT", format!("{file}: hash chain is invalid"))
                .with_detail(serde_json::json!({
                    "file": file,
                    "first_bad_index": report.first_bad_index,
                    "entries": report.entries,
                })),
            StoreError::Corrupt { path, .. } | StoreError::Parse { path, .. } => {
                Self::new("STORE_CORRUPT", "store content is invalid")
                    .with_detail(serde_json::json!({ "path": path.file_name().map(|f| f.to_string_lossy()) }))
            }
            StoreError::Engine(e) => e.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

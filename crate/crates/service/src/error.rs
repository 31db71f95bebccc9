//! The `{code, message, details}` error envelope and status mapping.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use calib_core::project::ProjectError;
use calib_core::store::StoreError;
use calib_core::workflow::{ErrorClass, WorkflowError};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        let code = match what {
            "project" => "unknown_project",
            "camera" => "unknown_camera",
            "marker" => "unknown_marker",
            _ => "unknown_blob",
        };
        Self::new(StatusCode::NOT_FOUND, code, format!("{what} {id:?} not found")).with_details(json!({ what: id }))
    }

    /// Rejections of a whole project document: always the caller's input.
    pub fn document(e: ProjectError) -> Self {
        match e {
            ProjectError::Io(m) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_failure", m),
            ProjectError::Parse(m) => Self::new(StatusCode::BAD_REQUEST, "invalid_document", m),
            ProjectError::Schema(v) => {
                Self::new(StatusCode::BAD_REQUEST, "unsupported_schema", format!("unsupported schema_version {v}"))
            }
            ProjectError::Validation { path, reason } => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_project", format!("{path}: {reason}")).with_details(json!({ "path": path }))
            }
        }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let status = match e.class() {
            ErrorClass::Validation | ErrorClass::Convergence => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::Precondition => StatusCode::CONFLICT,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
        };
        Self { status, code: e.code(), message: e.to_string(), details: e.details() }
    }
}

impl<E: Into<ApiError>> From<StoreError<E>> for ApiError {
    fn from(e: StoreError<E>) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::not_found("project", &id),
            StoreError::Stale { given, current } => ApiError::new(StatusCode::CONFLICT, "stale_version", format!("version {given} is stale"))
                .with_details(json!({ "given": given, "current": current })),
            StoreError::Project(p) => {
                let mut e = ApiError::document(p);
                if e.status == StatusCode::BAD_REQUEST {
                    e.status = StatusCode::UNPROCESSABLE_ENTITY;
                }
                e
            }
            StoreError::Rejected(e) => e.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "details": self.details });
        crate::json_response(self.status, &body, None)
    }
}

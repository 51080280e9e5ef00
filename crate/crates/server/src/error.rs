use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown annotator token")]
    Unauthorized,

    #[error("unknown cluster {0}")]
    UnknownCluster(u32),

    #[error("unknown model {0}")]
    UnknownModel(String),

    #[error("ids not in remaining set: {}", .0.join(", "))]
    NotRemaining(Vec<String>),

    #[error("cluster {0} is already complete for this annotator")]
    Terminal(u32),

    #[error("round {got} does not match the next round {expected}")]
    RoundMismatch { expected: usize, got: usize },

    #[error("nothing to export: no completed clusters")]
    NothingCompleted,

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("config: {0}")]
    Config(String),

    #[error("round log: {0}")]
    Log(String),

    #[error("{0}")]
    Data(#[from] cadsim_core::Error),

    #[error("startup: {0}")]
    Startup(String),

    #[error("internal: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    offending: Vec<String>,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::UnknownCluster(_) | ServiceError::UnknownModel(_) => StatusCode::NOT_FOUND,
            ServiceError::NotRemaining(_)
            | ServiceError::Terminal(_)
            | ServiceError::RoundMismatch { .. }
            | ServiceError::NothingCompleted => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let offending = match &self {
            ServiceError::NotRemaining(ids) => ids.clone(),
            _ => Vec::new(),
        };
        (status, Json(ErrorBody { error: self.to_string(), offending })).into_response()
    }
}

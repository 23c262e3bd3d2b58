use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use tracescope_core::explorer::ExplorerError;
use tracescope_core::index::IndexError;
use tracescope_core::prefs::PrefsError;
use tracescope_core::snapshot::ReplayError;
use tracescope_core::state::StateError;

use crate::api::ErrorBody;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no session {0}")]
    UnknownSession(u64),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    OutOfRange(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::OutOfRange(_) => StatusCode::RANGE_NOT_SATISFIABLE,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::Forbidden(_) => "forbidden",
            ApiError::NotFound(_) => "not_found",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::OutOfRange(_) => "out_of_range",
            ApiError::Unprocessable(_) => "invalid_preferences",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl From<ExplorerError> for ApiError {
    fn from(e: ExplorerError) -> Self {
        let msg = e.to_string();
        match e {
            ExplorerError::Replay(ReplayError::OutOfRange { .. })
            | ExplorerError::Index(IndexError::EventOutOfRange { .. } | IndexError::LineOutOfRange { .. }) => {
                ApiError::OutOfRange(msg)
            }
            ExplorerError::State(StateError::NoSuchNode(_)) => ApiError::NotFound(msg),
            ExplorerError::InvalidRequest(_) => ApiError::BadRequest(msg),
            _ => ApiError::Internal(msg),
        }
    }
}

impl From<PrefsError> for ApiError {
    fn from(e: PrefsError) -> Self {
        ApiError::Unprocessable(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!("{self}");
        }
        let body = ErrorBody { error: self.code().into(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pathpref_core::Error as CoreError;

use crate::api::{ErrorBody, FinalResult, API_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),

    #[error("unknown session {0}")]
    NotFound(String),

    #[error("stale version {given}; the session is at version {current}")]
    Stale { current: u64, given: u64 },

    #[error("session is {:?}; no further queries", .0.status)]
    Finished(Box<FinalResult>),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Core(CoreError::Io(e))
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Stale { .. } => StatusCode::CONFLICT,
            ApiError::Finished(_) => StatusCode::GONE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Core(e) => match e {
                CoreError::Io(_) | CoreError::Csv(_) => StatusCode::INTERNAL_SERVER_ERROR,
                CoreError::BudgetExhausted(_) | CoreError::NoPendingQuery => StatusCode::GONE,
                CoreError::Unreachable { .. }
                | CoreError::InstanceTooLarge { .. }
                | CoreError::NegativeEdgeCost { .. }
                | CoreError::DegenerateHalfspace
                | CoreError::PosteriorCollapse
                | CoreError::NothingToAsk => StatusCode::UNPROCESSABLE_ENTITY,
                _ => StatusCode::BAD_REQUEST,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::NotFound(_) => "not_found",
            ApiError::Stale { .. } => "stale_version",
            ApiError::Finished(_) => "session_finished",
            ApiError::Internal(_) => "internal",
            ApiError::Core(e) => match e {
                CoreError::Io(_) | CoreError::Csv(_) => "internal",
                CoreError::BudgetExhausted(_) | CoreError::NoPendingQuery => "session_finished",
                CoreError::Parse { .. } => "parse",
                CoreError::Schema(_) => "invalid_scenario",
                CoreError::Config(_) => "invalid_config",
                CoreError::Calibration(_) => "calibration",
                CoreError::PosteriorCollapse => "posterior_collapse",
                _ => "unprocessable",
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = ErrorBody {
            api_version: API_VERSION,
            error: self.code().to_string(),
            message: self.to_string(),
            version: match &self {
                ApiError::Stale { current, .. } => Some(*current),
                ApiError::Finished(r) => Some(r.version),
                _ => None,
            },
            result: match self {
                ApiError::Finished(r) => Some(*r),
                _ => None,
            },
        };
        (status, Json(body)).into_response()
    }
}

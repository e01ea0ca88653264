use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

use gcodeloop::corrector::LoopError;
use gcodeloop::params::ParamsError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("no session '{0}'")]
    UnknownSession(String),
    #[error("{0}")]
    NotFound(String),
    /// Not found, with a one-line summary of why for the response header.
    #[error("{detail}")]
    Failed { detail: String, summary: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    InvalidValue(String),
    #[error("{0}")]
    GeneratorUnavailable(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct Envelope<'a> {
    error: &'a str,
    detail: String,
}

/// Response header carrying the failure summary of a loop that did not
/// produce a program.
pub const FAILURE_HEADER: &str = "x-failure-summary";

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownSession(_) | ApiError::NotFound(_) | ApiError::Failed { .. } => {
                StatusCode::NOT_FOUND
            }
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::InvalidValue(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::GeneratorUnavailable(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::NotFound(_) => "not_found",
            ApiError::Failed { .. } => "generation_failed",
            ApiError::Conflict(_) => "conflict",
            ApiError::InvalidValue(_) => "invalid_value",
            ApiError::GeneratorUnavailable(_) => "generator_unavailable",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(Envelope {
            error: self.code(),
            detail: self.to_string(),
        });
        let mut resp = (self.status(), body).into_response();
        if let ApiError::Failed { summary, .. } = &self {
            let clean: String = summary
                .chars()
                .map(|c| {
                    if c.is_ascii_graphic() || c == ' ' {
                        c
                    } else {
                        ' '
                    }
                })
                .collect();
            if let Ok(v) = HeaderValue::from_str(&clean) {
                resp.headers_mut().insert(FAILURE_HEADER, v);
            }
        }
        resp
    }
}

impl From<ParamsError> for ApiError {
    fn from(e: ParamsError) -> Self {
        match e {
            ParamsError::EmptyDescription => ApiError::BadRequest(e.to_string()),
            ParamsError::MissingFields(_) | ParamsError::InsufficientGeometry(_) => {
                ApiError::Conflict(e.to_string())
            }
            _ => ApiError::InvalidValue(e.to_string()),
        }
    }
}

impl From<LoopError> for ApiError {
    fn from(e: LoopError) -> Self {
        match e {
            LoopError::Params(p) => p.into(),
            LoopError::InvalidConfig(m) => ApiError::InvalidValue(m),
            LoopError::GeneratorUnavailable { .. } => ApiError::GeneratorUnavailable(e.to_string()),
        }
    }
}
